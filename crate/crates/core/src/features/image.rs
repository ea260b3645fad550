use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Stft,
    Mel,
    Mfcc,
    Generic,
}

impl FeatureKind {
    /// Label used in summary tables.
    pub fn table_name(self) -> &'static str {
        match self {
            FeatureKind::Stft => "STFT",
            FeatureKind::Mel => "Mel",
            FeatureKind::Mfcc => "MFCC",
            FeatureKind::Generic => "Generic",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Stft => "stft",
            FeatureKind::Mel => "mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Generic => "generic",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "stft" => Ok(FeatureKind::Stft),
            "mel" => Ok(FeatureKind::Mel),
            "mfcc" => Ok(FeatureKind::Mfcc),
            "generic" => Ok(FeatureKind::Generic),
            other => Err(format!(
                "unknown feature kind {other:?} (expected stft, mel or mfcc)"
            )),
        }
    }
}

/// A time-frequency grid, stored row-major in `(y, x, channel)` order.
///
/// For spectrogram kinds rows are frequency bins (or Mel bands, or cepstral
/// coefficients) and columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub data: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kind: FeatureKind,
}

impl FeatureImage {
    pub fn new(
        data: Vec<f64>,
        height: usize,
        width: usize,
        channels: usize,
        kind: FeatureKind,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "feature image dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "feature image {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "feature image holds non-finite values".into(),
            ));
        }
        Ok(FeatureImage {
            data,
            height,
            width,
            channels,
            kind,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, kind: FeatureKind) -> Self {
        FeatureImage {
            data: vec![0.0; height * width * channels],
            height,
            width,
            channels,
            kind,
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Values in channel-major `(C, H, W)` order, the layout models consume.
    pub fn to_chw(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.push(self.get(y, x, c));
                }
            }
        }
        out
    }
}
