//! C interface to `qv-core`.
//!
//! Every fallible function returns a [`QvStatus`]; on failure the message is
//! available from [`qv_last_error`] on the same thread. Handles are opaque,
//! owned by the caller, released with their `_free` function, and must stay
//! on the thread that created them.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use qv_core::audio::{read_wav, resample, AudioClip, Label};
use qv_core::features::{extract, FeatureConfig, FeatureImage, FeatureKind};
use qv_core::metrics::{eer, ScoreSet};
use qv_core::models::{load_checkpoint, Model};
use qv_core::qv::basis_waves;
use qv_core::tensor::{Tensor, Var};
use qv_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Data = 6,
    Numeric = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QvFeature {
    Stft = 0,
    Mel = 1,
    Mfcc = 2,
}

/// Mono audio at a known sample rate.
pub struct QvClip {
    clip: AudioClip,
}

/// A trained classifier loaded from a checkpoint.
pub struct QvModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> QvStatus {
    match e {
        Error::Io { .. } => QvStatus::Io,
        Error::Format { .. } | Error::UnsupportedFormat { .. } | Error::Parse { .. } => {
            QvStatus::Format
        }
        Error::Shape(_) => QvStatus::Shape,
        Error::Contract(_) | Error::Config(_) => QvStatus::InvalidArgument,
        Error::Data(_) => QvStatus::Data,
        Error::Numeric(_) => QvStatus::Numeric,
    }
}

struct Fail(QvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QvStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QvStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            QvStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(QvStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

fn expect_len(need: usize, got: usize, what: &str) -> Result<(), Fail> {
    if need != got {
        return Err(Fail(
            QvStatus::Shape,
            format!("{what} holds {got} values, {need} required"),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a mono or stereo WAV file (PCM 16-bit or float32).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn qv_clip_read_wav(path: *const c_char, out: *mut *mut QvClip) -> QvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let clip = read_wav(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(QvClip { clip }));
        Ok(())
    })
}

/// Builds a clip from `len` samples in `[-1, 1]`.
///
/// # Safety
/// `samples` must point to `len` floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_clip_from_samples(
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    out: *mut *mut QvClip,
) -> QvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = slice(samples, len, "samples")?;
        let clip = AudioClip::new(s.to_vec(), sample_rate, "ffi")?;
        *out = Box::into_raw(Box::new(QvClip { clip }));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qv_clip_len(clip: *const QvClip) -> usize {
    clip.as_ref().map_or(0, |c| c.clip.samples.len())
}

/// Sample rate in Hz, or 0 for a null handle.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qv_clip_sample_rate(clip: *const QvClip) -> u32 {
    clip.as_ref().map_or(0, |c| c.clip.sample_rate)
}

/// # Safety
/// `clip` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qv_clip_free(clip: *mut QvClip) {
    if !clip.is_null() {
        drop(Box::from_raw(clip));
    }
}

/// Extracts a 32x32 feature image (row-major, frequency rows) into `out`,
/// resampling to 16 kHz first when needed. `out_len` must be 1024.
///
/// # Safety
/// `clip` must be a live handle and `out` must point to `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn qv_extract_features(
    clip: *const QvClip,
    kind: QvFeature,
    out: *mut f32,
    out_len: usize,
) -> QvStatus {
    guard(|| {
        let clip = clip.as_ref().ok_or_else(|| null("clip"))?;
        let cfg = FeatureConfig::default();
        expect_len(cfg.out_height * cfg.out_width, out_len, "out")?;
        let out = slice_mut(out, out_len, "out")?;
        let kind = match kind {
            QvFeature::Stft => FeatureKind::Stft,
            QvFeature::Mel => FeatureKind::Mel,
            QvFeature::Mfcc => FeatureKind::Mfcc,
        };
        let audio = if clip.clip.sample_rate == cfg.sample_rate {
            clip.clip.clone()
        } else {
            resample(&clip.clip, cfg.sample_rate)?
        };
        let img = extract(&audio, kind, &cfg)?;
        for (o, v) in out.iter_mut().zip(&img.data) {
            *o = *v as f32;
        }
        Ok(())
    })
}

/// The eight shifted-difference maps of a `height x width` image, written
/// map-major into `out` (`8 * height * width` values). Both sides must
/// exceed 4.
///
/// # Safety
/// `image` must point to `height * width` doubles and `out` to `out_len`.
#[no_mangle]
pub unsafe extern "C" fn qv_basis_waves(
    image: *const f64,
    height: usize,
    width: usize,
    out: *mut f64,
    out_len: usize,
) -> QvStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Fail(QvStatus::InvalidArgument, "image size overflows".into()))?;
        let img = slice(image, n, "image")?;
        expect_len(8 * n, out_len, "out")?;
        let out = slice_mut(out, out_len, "out")?;
        let x = Var::constant(Tensor::from_vec(&[1, 1, height, width], img.to_vec())?);
        let stack = basis_waves(&x)?;
        out.copy_from_slice(stack.maps.value().data());
        Ok(())
    })
}

/// Loads a QVCK checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn qv_model_load(path: *const c_char, out: *mut *mut QvModel) -> QvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(QvModel { model }));
        Ok(())
    })
}

/// Input image shape expected by the model.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_model_input_shape(
    model: *const QvModel,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> QvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if height.is_null() || width.is_null() || channels.is_null() {
            return Err(null("shape output"));
        }
        let (h, w, c) = m.model.config().input_shape();
        (*height, *width, *channels) = (h, w, c);
        Ok(())
    })
}

/// Scores `count` images laid out back to back, each `height * width *
/// channels` floats in `(y, x, c)` order. Writes `logit(bonafide) -
/// logit(spoof)` per image to `scores`.
///
/// # Safety
/// `model` must be a live handle, `images` must hold `count` images and
/// `scores` must have room for `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn qv_model_score(
    model: *const QvModel,
    images: *const f32,
    count: usize,
    scores: *mut f64,
) -> QvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (h, w, c) = m.model.config().input_shape();
        let per = h * w * c;
        let total = count
            .checked_mul(per)
            .ok_or_else(|| Fail(QvStatus::InvalidArgument, "image count overflows".into()))?;
        let data = slice(images, total, "images")?;
        let out = slice_mut(scores, count, "scores")?;
        let imgs = data
            .chunks_exact(per)
            .map(|chunk| {
                FeatureImage::new(
                    chunk.iter().map(|&v| v as f64).collect(),
                    h,
                    w,
                    c,
                    FeatureKind::Generic,
                )
            })
            .collect::<qv_core::Result<Vec<_>>>()?;
        let refs: Vec<&FeatureImage> = imgs.iter().collect();
        out.copy_from_slice(&m.model.score(&refs)?);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qv_model_free(model: *mut QvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Equal error rate of `n` scores; `is_bonafide[i]` is nonzero for bonafide
/// trials. Both classes must be present.
///
/// # Safety
/// `scores` and `is_bonafide` must hold `n` values; `eer_out` and
/// `threshold_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_eer(
    scores: *const f64,
    is_bonafide: *const u8,
    n: usize,
    eer_out: *mut f64,
    threshold_out: *mut f64,
) -> QvStatus {
    guard(|| {
        if eer_out.is_null() || threshold_out.is_null() {
            return Err(null("eer output"));
        }
        let s = slice(scores, n, "scores")?;
        let b = slice(is_bonafide, n, "is_bonafide")?;
        let labels = b
            .iter()
            .map(|&v| {
                if v != 0 {
                    Label::Bonafide
                } else {
                    Label::Spoof
                }
            })
            .collect();
        let e = eer(&ScoreSet::unnamed(s.to_vec(), labels)?)?;
        (*eer_out, *threshold_out) = (e.eer, e.threshold);
        Ok(())
    })
}
