//! Time-frequency features: STFT magnitude in dB, log-Mel and normalized
//! MFCC, each resized to a fixed grid.

mod cache;
mod dataset;
mod image;
mod spectral;

pub use cache::{
    decode_cache, encode_cache, read_cache, write_cache, FeatureRecord, CACHE_MAGIC, CACHE_VERSION,
};
pub use dataset::{extract_entries, extract_required, Extraction};
pub use image::{FeatureImage, FeatureKind};
pub use spectral::{
    cepstrum, dct_matrix, extract, hann_periodic, hz_to_mel, mel_centers, mel_filterbank,
    mel_spectrogram, mel_to_hz, mfcc, normalize_rows, resize_bilinear, stft_magnitude, to_db,
    FeatureConfig, FeatureExtractor, DB_EPS, DB_FLOOR, MFCC_STD_FLOOR,
};
