//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.

use super::AudioClip;
use crate::error::{Error, Result};

/// Taps evaluated per output sample, i.e. per polyphase branch.
pub const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.0;
const ROLLOFF: f64 = 0.95;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct PolyphaseFilter {
    up: usize,
    down: usize,
    /// `up` rows of `TAPS_PER_PHASE` coefficients.
    taps: Vec<f64>,
}

impl PolyphaseFilter {
    fn new(up: usize, down: usize) -> Self {
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half = (TAPS_PER_PHASE / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut taps = vec![0.0; up * TAPS_PER_PHASE];
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let row = &mut taps[phase * TAPS_PER_PHASE..(phase + 1) * TAPS_PER_PHASE];
            for (j, tap) in row.iter_mut().enumerate() {
                // distance (in input samples) from the output instant to input sample j
                let tau = j as f64 - (half - 1.0) - frac;
                let r = tau / half;
                let window = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
                };
                let arg = std::f64::consts::PI * cutoff * tau;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    arg.sin() / arg
                };
                *tap = cutoff * sinc * window;
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > 1e-12 {
                row.iter_mut().for_each(|t| *t /= sum);
            }
        }
        PolyphaseFilter { up, down, taps }
    }

    fn apply(&self, input: &[f32]) -> Vec<f32> {
        let out_len = (input.len() * self.up).div_ceil(self.down);
        let offset = TAPS_PER_PHASE as isize / 2 - 1;
        (0..out_len)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as isize;
                let phase = pos % self.up;
                let row = &self.taps[phase * TAPS_PER_PHASE..(phase + 1) * TAPS_PER_PHASE];
                let mut acc = 0.0f64;
                for (j, &t) in row.iter().enumerate() {
                    let idx = base + j as isize - offset;
                    if idx >= 0 && (idx as usize) < input.len() {
                        acc += t * input[idx as usize] as f64;
                    }
                }
                acc.clamp(-1.0, 1.0) as f32
            })
            .collect()
    }
}

/// Resamples `clip` to `target_rate`. Returns the clip unchanged when the
/// rates already agree.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::Contract(
            "target sample rate must be positive".into(),
        ));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(clip.sample_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (clip.sample_rate as u64 / g) as usize;
    let filter = PolyphaseFilter::new(up, down);
    Ok(AudioClip {
        samples: filter.apply(&clip.samples),
        sample_rate: target_rate,
        source_id: clip.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, secs: f64) -> AudioClip {
        let n = (rate as f64 * secs) as usize;
        AudioClip {
            samples: (0..n)
                .map(|i| {
                    (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                        as f32
                })
                .collect(),
            sample_rate: rate,
            source_id: "tone".into(),
        }
    }

    /// Peak frequency by direct DFT magnitude over integer-Hz bins of a 1 s signal.
    fn peak_hz(clip: &AudioClip, max_hz: usize) -> usize {
        let n = clip.samples.len();
        (1..max_hz)
            .max_by(|&a, &b| {
                let mag = |f: usize| {
                    let (mut re, mut im) = (0.0f64, 0.0f64);
                    for (i, &s) in clip.samples.iter().enumerate() {
                        let ph = 2.0 * std::f64::consts::PI * f as f64 * i as f64 / n as f64;
                        re += s as f64 * ph.cos();
                        im -= s as f64 * ph.sin();
                    }
                    re * re + im * im
                };
                mag(a).partial_cmp(&mag(b)).unwrap()
            })
            .unwrap()
    }

    #[test]
    fn identity_when_rates_match() {
        let clip = tone(440.0, 16000, 0.1);
        let out = resample(&clip, 16000).unwrap();
        assert_eq!(out.samples, clip.samples);
    }

    #[test]
    fn upsampling_doubles_length() {
        let clip = tone(300.0, 8000, 0.25);
        let out = resample(&clip, 16000).unwrap();
        assert!((out.samples.len() as i64 - 2 * clip.samples.len() as i64).abs() <= 1);
    }

    #[test]
    fn downsampled_tone_keeps_peak() {
        let clip = tone(100.0, 48000, 1.0);
        let out = resample(&clip, 16000).unwrap();
        assert_eq!(out.samples.len(), 16000);
        assert_eq!(peak_hz(&out, 200), 100);
    }

    #[test]
    fn round_trip_keeps_peak() {
        let clip = tone(150.0, 16000, 1.0);
        let there = resample(&clip, 22050).unwrap();
        let back = resample(&there, 16000).unwrap();
        assert!((back.samples.len() as i64 - 16000).abs() <= 1);
        assert_eq!(peak_hz(&back, 300), 150);
    }

    #[test]
    fn zero_rate_rejected() {
        assert!(resample(&tone(1.0, 8000, 0.01), 0).is_err());
    }
}
