use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureImage, FeatureKind};
use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const DB_FLOOR: f64 = -80.0;
pub const DB_EPS: f64 = 1e-10;
pub const MFCC_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub n_mfcc: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 16_000,
            win_length: 1024,
            hop_length: 256,
            n_fft: 1024,
            n_mels: 128,
            fmin: 0.0,
            fmax: 8000.0,
            n_mfcc: 40,
            out_height: 32,
            out_width: 32,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 || self.hop_length == 0 || self.n_fft < 2 || self.win_length == 0 {
            return bad("sample_rate, hop_length, n_fft and win_length must be positive".into());
        }
        if self.win_length > self.n_fft {
            return bad(format!(
                "win_length {} exceeds n_fft {}",
                self.win_length, self.n_fft
            ));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 || self.fmin < 0.0 || self.fmin >= self.fmax {
            return bad(format!(
                "need 0 <= fmin < fmax <= sample_rate/2, got fmin {} fmax {}",
                self.fmin, self.fmax
            ));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad(format!(
                "need 1 <= n_mfcc <= n_mels, got {} and {}",
                self.n_mfcc, self.n_mels
            ));
        }
        if self.out_height == 0 || self.out_width == 0 {
            return bad("output size must be positive".into());
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a clip of `len` samples (after short-clip padding).
    pub fn n_frames(&self, len: usize) -> usize {
        1 + len.max(self.win_length) / self.hop_length
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Stateful extractor; the filterbank, DCT matrix and FFT plan are built once.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Vec<f64>,
    dct: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let mut window = vec![0.0; cfg.n_fft];
        let lead = (cfg.n_fft - cfg.win_length) / 2;
        window[lead..lead + cfg.win_length].copy_from_slice(&hann_periodic(cfg.win_length));
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        let filterbank = mel_filterbank(&cfg)?;
        let dct = dct_matrix(cfg.n_mfcc, cfg.n_mels);
        Ok(FeatureExtractor {
            cfg,
            window,
            fft,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate != self.cfg.sample_rate {
            return Err(Error::Contract(format!(
                "clip {} is at {} Hz but features expect {} Hz; resample first",
                clip.source_id, clip.sample_rate, self.cfg.sample_rate
            )));
        }
        if clip.samples.is_empty() {
            return Err(Error::Contract(format!("clip {} is empty", clip.source_id)));
        }
        Ok(())
    }

    /// Centered, reflect-padded frames of the (possibly zero-extended) signal.
    fn padded_signal(&self, clip: &AudioClip) -> Vec<f64> {
        let mut sig: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
        if sig.len() < self.cfg.win_length {
            sig.resize(self.cfg.win_length, 0.0);
        }
        let pad = self.cfg.n_fft / 2;
        let n = sig.len();
        let mut out = Vec::with_capacity(n + 2 * pad);
        // reflect excludes the edge sample itself
        out.extend((1..=pad).rev().map(|i| sig[i.min(n - 1)]));
        out.extend_from_slice(&sig);
        out.extend((1..=pad).map(|i| sig[n.saturating_sub(1 + i)]));
        out
    }

    /// Complex spectrum per frame, bins `0..=n_fft/2`.
    fn spectra(&self, clip: &AudioClip) -> Result<(Vec<Vec<Complex<f64>>>, usize)> {
        self.check_rate(clip)?;
        let padded = self.padded_signal(clip);
        let n_frames = self.cfg.n_frames(clip.samples.len());
        let n_bins = self.cfg.n_bins();
        let mut frames = Vec::with_capacity(n_frames);
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.n_fft];
        for t in 0..n_frames {
            let start = t * self.cfg.hop_length;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(padded[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            frames.push(buf[..n_bins].to_vec());
        }
        Ok((frames, n_frames))
    }

    pub fn stft_magnitude(&self, clip: &AudioClip) -> Result<FeatureImage> {
        let (frames, n_frames) = self.spectra(clip)?;
        let n_bins = self.cfg.n_bins();
        let mut img = FeatureImage::zeros(n_bins, n_frames, 1, FeatureKind::Stft);
        for (t, spec) in frames.iter().enumerate() {
            for (k, c) in spec.iter().enumerate() {
                img.set(k, t, 0, c.norm());
            }
        }
        Ok(img)
    }

    /// Mel energies in dB (ref = max, floored at -80).
    pub fn mel_spectrogram(&self, clip: &AudioClip) -> Result<FeatureImage> {
        let (frames, n_frames) = self.spectra(clip)?;
        let n_bins = self.cfg.n_bins();
        let mut img = FeatureImage::zeros(self.cfg.n_mels, n_frames, 1, FeatureKind::Mel);
        for (t, spec) in frames.iter().enumerate() {
            let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
            for m in 0..self.cfg.n_mels {
                let row = &self.filterbank[m * n_bins..(m + 1) * n_bins];
                img.set(m, t, 0, row.iter().zip(&power).map(|(w, p)| w * p).sum());
            }
        }
        Ok(to_db(&img))
    }

    /// Cepstral coefficients of the log-Mel grid, z-scored per coefficient over time.
    pub fn mfcc(&self, clip: &AudioClip) -> Result<FeatureImage> {
        let log_mel = self.mel_spectrogram(clip)?;
        let mut out = cepstrum(&log_mel, &self.dct, self.cfg.n_mfcc);
        normalize_rows(&mut out);
        Ok(out)
    }

    /// Fixed-size single-channel image of the requested kind.
    pub fn extract(&self, clip: &AudioClip, kind: FeatureKind) -> Result<FeatureImage> {
        let raw = match kind {
            FeatureKind::Stft => to_db(&self.stft_magnitude(clip)?),
            FeatureKind::Mel => self.mel_spectrogram(clip)?,
            FeatureKind::Mfcc => self.mfcc(clip)?,
            FeatureKind::Generic => {
                return Err(Error::Contract(
                    "extract needs one of stft, mel, mfcc".into(),
                ));
            }
        };
        let mut img = resize_bilinear(&raw, self.cfg.out_height, self.cfg.out_width);
        img.kind = kind;
        Ok(img)
    }
}

pub fn stft_magnitude(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureImage> {
    FeatureExtractor::new(cfg.clone())?.stft_magnitude(clip)
}

pub fn mel_spectrogram(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureImage> {
    FeatureExtractor::new(cfg.clone())?.mel_spectrogram(clip)
}

pub fn mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureImage> {
    FeatureExtractor::new(cfg.clone())?.mfcc(clip)
}

pub fn extract(clip: &AudioClip, kind: FeatureKind, cfg: &FeatureConfig) -> Result<FeatureImage> {
    FeatureExtractor::new(cfg.clone())?.extract(clip, kind)
}

/// Amplitude dB relative to the image maximum, clipped to [-80, 0].
///
/// An image with no energy at all maps to the floor everywhere.
pub fn to_db(img: &FeatureImage) -> FeatureImage {
    let peak = img.data.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut out = img.clone();
    if peak < DB_EPS {
        out.data.iter_mut().for_each(|v| *v = DB_FLOOR);
        return out;
    }
    let ref_db = 20.0 * peak.log10();
    for v in out.data.iter_mut() {
        *v = (20.0 * v.max(DB_EPS).log10() - ref_db).clamp(DB_FLOOR, 0.0);
    }
    out
}

/// Triangular filters on the HTK mel scale, `n_mels x (n_fft/2 + 1)` row-major.
///
/// Each row is scaled so its largest weight is exactly 1. A band too narrow
/// to contain any FFT bin gets a single unit weight at the bin nearest its
/// center frequency.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax);
    let hz: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mut fb = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (hz[m], hz[m + 1], hz[m + 2]);
        let row = &mut fb[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            *w = rise.min(fall).max(0.0);
        }
        let peak = row.iter().fold(0.0f64, |a, &b| a.max(b));
        if peak > 0.0 {
            row.iter_mut().for_each(|w| *w /= peak);
        } else {
            let nearest = ((center / bin_hz).round() as usize).min(n_bins - 1);
            row[nearest] = 1.0;
        }
    }
    Ok(fb)
}

/// Center frequency (Hz) of each Mel band.
pub fn mel_centers(cfg: &FeatureConfig) -> Vec<f64> {
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax);
    (1..=cfg.n_mels)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Orthonormal DCT-II basis, `n_out x n_in` row-major.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    let n = n_in as f64;
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        };
        for i in 0..n_in {
            m[k * n_in + i] = scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos();
        }
    }
    m
}

/// DCT along the row axis, keeping the first `n_coeffs` coefficients.
pub fn cepstrum(log_mel: &FeatureImage, dct: &[f64], n_coeffs: usize) -> FeatureImage {
    let n_in = log_mel.height;
    let mut out = FeatureImage::zeros(n_coeffs, log_mel.width, 1, FeatureKind::Mfcc);
    for t in 0..log_mel.width {
        for k in 0..n_coeffs {
            let row = &dct[k * n_in..(k + 1) * n_in];
            let v: f64 = row
                .iter()
                .enumerate()
                .map(|(i, w)| w * log_mel.get(i, t, 0))
                .sum();
            out.set(k, t, 0, v);
        }
    }
    out
}

/// Z-scores each row over its columns; the deviation is floored at 1e-8.
pub fn normalize_rows(img: &mut FeatureImage) {
    let w = img.width as f64;
    for y in 0..img.height {
        let first = img.get(y, 0, 0);
        if (0..img.width).all(|x| img.get(y, x, 0) == first) {
            (0..img.width).for_each(|x| img.set(y, x, 0, 0.0));
            continue;
        }
        let mean = (0..img.width).map(|x| img.get(y, x, 0)).sum::<f64>() / w;
        let var = (0..img.width)
            .map(|x| (img.get(y, x, 0) - mean).powi(2))
            .sum::<f64>()
            / w;
        let sd = var.sqrt().max(MFCC_STD_FLOOR);
        for x in 0..img.width {
            let v = (img.get(y, x, 0) - mean) / sd;
            img.set(y, x, 0, v);
        }
    }
}

fn source_coord(i: usize, out_n: usize, in_n: usize) -> f64 {
    if out_n == 1 {
        (in_n as f64 - 1.0) / 2.0
    } else {
        i as f64 * (in_n as f64 - 1.0) / (out_n as f64 - 1.0)
    }
}

/// Corner-aligned bilinear resize, each channel independently.
pub fn resize_bilinear(img: &FeatureImage, out_h: usize, out_w: usize) -> FeatureImage {
    let mut out = FeatureImage::zeros(out_h, out_w, img.channels, img.kind);
    for y in 0..out_h {
        let sy = source_coord(y, out_h, img.height);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = sy - y0 as f64;
        for x in 0..out_w {
            let sx = source_coord(x, out_w, img.width);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..img.channels {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                out.set(y, x, c, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}
