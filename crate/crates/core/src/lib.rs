//! Quantum-vision information-wave transforms for audio spectrograms, a
//! small reverse-mode autodiff engine, and the CNN / ViT classifiers built on
//! top of them for bonafide vs. spoofed speech detection.

pub mod audio;
pub mod cli;
pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod qv;
pub mod tensor;

pub use error::{Error, Result};
