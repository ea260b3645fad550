#ifndef QV_H
#define QV_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QvStatus {
  QV_STATUS_OK = 0,
  QV_STATUS_NULL_ARGUMENT = 1,
  QV_STATUS_INVALID_ARGUMENT = 2,
  QV_STATUS_IO = 3,
  QV_STATUS_FORMAT = 4,
  QV_STATUS_SHAPE = 5,
  QV_STATUS_DATA = 6,
  QV_STATUS_NUMERIC = 7,
  QV_STATUS_PANIC = 8,
} QvStatus;

typedef enum QvFeature {
  QV_FEATURE_STFT = 0,
  QV_FEATURE_MEL = 1,
  QV_FEATURE_MFCC = 2,
} QvFeature;

/**
 * Mono audio at a known sample rate.
 */
typedef struct QvClip QvClip;

/**
 * A trained classifier loaded from a checkpoint.
 */
typedef struct QvModel QvModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call on the same thread.
 */
const char *qv_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qv_version(void);

/**
 * Reads a mono or stereo WAV file (PCM 16-bit or float32).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum QvStatus qv_clip_read_wav(const char *path, struct QvClip **out);

/**
 * Builds a clip from `len` samples in `[-1, 1]`.
 *
 * # Safety
 * `samples` must point to `len` floats and `out` must be writable.
 */
enum QvStatus qv_clip_from_samples(const float *samples,
                                   size_t len,
                                   uint32_t sample_rate,
                                   struct QvClip **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `clip` must be null or a live handle.
 */
size_t qv_clip_len(const struct QvClip *clip);

/**
 * Sample rate in Hz, or 0 for a null handle.
 *
 * # Safety
 * `clip` must be null or a live handle.
 */
uint32_t qv_clip_sample_rate(const struct QvClip *clip);

/**
 * # Safety
 * `clip` must be null or a handle not yet freed.
 */
void qv_clip_free(struct QvClip *clip);

/**
 * Extracts a 32x32 feature image (row-major, frequency rows) into `out`,
 * resampling to 16 kHz first when needed. `out_len` must be 1024.
 *
 * # Safety
 * `clip` must be a live handle and `out` must point to `out_len` floats.
 */
enum QvStatus qv_extract_features(const struct QvClip *clip,
                                  enum QvFeature kind,
                                  float *out,
                                  size_t out_len);

/**
 * The eight shifted-difference maps of a `height x width` image, written
 * map-major into `out` (`8 * height * width` values). Both sides must
 * exceed 4.
 *
 * # Safety
 * `image` must point to `height * width` doubles and `out` to `out_len`.
 */
enum QvStatus qv_basis_waves(const double *image,
                             size_t height,
                             size_t width,
                             double *out,
                             size_t out_len);

/**
 * Loads a QVCK checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum QvStatus qv_model_load(const char *path, struct QvModel **out);

/**
 * Input image shape expected by the model.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be writable.
 */
enum QvStatus qv_model_input_shape(const struct QvModel *model,
                                   size_t *height,
                                   size_t *width,
                                   size_t *channels);

/**
 * Scores `count` images laid out back to back, each `height * width *
 * channels` floats in `(y, x, c)` order. Writes `logit(bonafide) -
 * logit(spoof)` per image to `scores`.
 *
 * # Safety
 * `model` must be a live handle, `images` must hold `count` images and
 * `scores` must have room for `count` doubles.
 */
enum QvStatus qv_model_score(const struct QvModel *model,
                             const float *images,
                             size_t count,
                             double *scores);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void qv_model_free(struct QvModel *model);

/**
 * Equal error rate of `n` scores; `is_bonafide[i]` is nonzero for bonafide
 * trials. Both classes must be present.
 *
 * # Safety
 * `scores` and `is_bonafide` must hold `n` values; `eer_out` and
 * `threshold_out` must be writable.
 */
enum QvStatus qv_eer(const double *scores,
                     const uint8_t *is_bonafide,
                     size_t n,
                     double *eer_out,
                     double *threshold_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QV_H */
