//! Deterministic synthetic stand-in for a bonafide/spoof speech corpus.
//!
//! Bonafide clips are a few harmonically related partials with slow
//! amplitude vibrato and a low noise floor. Spoof clips start from the same
//! construction, then get frame-wise spectral quantization (coarse log-magnitude
//! steps with the weakest bins zeroed) and periodic phase jumps in the partials.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioClip, ClipSource, Dataset, Label, Split, TrialEntry};
use crate::error::{Error, Result};

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;
const CLIP_SAMPLES: usize = 16_000;
const QUANT_FRAME: usize = 512;
/// Log2-magnitude step for spectral quantization (about 6 dB).
const QUANT_STEP_LOG2: f64 = 1.0;
/// Bins this far below the frame peak are zeroed (dB).
const QUANT_FLOOR_DB: f64 = 30.0;

struct Partials {
    f0: f64,
    amps: Vec<f64>,
    vibrato_hz: f64,
    vibrato_depth: f64,
    vibrato_phase: f64,
    noise_sigma: f64,
}

impl Partials {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let n_harm = rng.random_range(3..=5);
        Partials {
            f0: rng.random_range(110.0..260.0),
            amps: (1..=n_harm)
                .map(|k| rng.random_range(0.4..1.0) / k as f64)
                .collect(),
            vibrato_hz: rng.random_range(2.0..6.0),
            vibrato_depth: rng.random_range(0.15..0.35),
            vibrato_phase: rng.random_range(0.0..2.0 * PI),
            noise_sigma: rng.random_range(0.001..0.004),
        }
    }

    /// Renders the partials; `phase_jump` returns an extra phase offset per sample.
    fn render(&self, phase_jump: impl Fn(usize) -> f64) -> Vec<f64> {
        let sr = SYNTH_SAMPLE_RATE as f64;
        let mut out: Vec<f64> = (0..CLIP_SAMPLES)
            .map(|i| {
                let t = i as f64 / sr;
                let env = 1.0
                    + self.vibrato_depth
                        * (2.0 * PI * self.vibrato_hz * t + self.vibrato_phase).sin();
                let jump = phase_jump(i);
                let s: f64 = self
                    .amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        a * (2.0 * PI * self.f0 * (k + 1) as f64 * t + jump * (k + 1) as f64).sin()
                    })
                    .sum();
                env * s
            })
            .collect();
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            out.iter_mut().for_each(|v| *v *= 0.6 / peak);
        }
        out
    }
}

fn spectral_quantize(signal: &mut [f64]) {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(QUANT_FRAME);
    let inv = planner.plan_fft_inverse(QUANT_FRAME);
    let floor = 10f64.powf(-QUANT_FLOOR_DB / 20.0);
    for frame in signal.chunks_mut(QUANT_FRAME) {
        let mut buf: Vec<Complex<f64>> = (0..QUANT_FRAME)
            .map(|i| Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        fwd.process(&mut buf);
        let peak = buf.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if peak == 0.0 {
            continue;
        }
        for c in buf.iter_mut() {
            let mag = c.norm();
            if mag < peak * floor {
                *c = Complex::new(0.0, 0.0);
            } else {
                let q = 2f64.powf((mag.log2() / QUANT_STEP_LOG2).round() * QUANT_STEP_LOG2);
                *c *= q / mag;
            }
        }
        inv.process(&mut buf);
        for (s, c) in frame.iter_mut().zip(&buf) {
            *s = c.re / QUANT_FRAME as f64;
        }
    }
}

/// Generates one clip of the given class. Pure in `(label, seed, index)`.
pub fn synth_clip(label: Label, seed: u64, index: u64, source_id: impl Into<String>) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((label.class_index() as u64) << 40) | index);
    let partials = Partials::draw(&mut rng);
    let mut signal = match label {
        Label::Bonafide => partials.render(|_| 0.0),
        Label::Spoof => {
            let period = rng.random_range(400..900);
            let jump = rng.random_range(0.5 * PI..1.5 * PI);
            let mut s = partials.render(|i| (i / period) as f64 * jump);
            spectral_quantize(&mut s);
            s
        }
    };
    let noise = Normal::new(0.0, partials.noise_sigma).expect("positive sigma");
    for v in signal.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    AudioClip {
        samples: signal.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect(),
        sample_rate: SYNTH_SAMPLE_RATE,
        source_id: source_id.into(),
    }
}

/// Builds `n_per_class` bonafide and `n_per_class` spoof one-second clips.
///
/// The first `ceil(0.8 * n_per_class)` clips of each class form the training
/// split and the rest the evaluation split.
pub fn synth_dataset(n_per_class: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::Contract(
            "synth_dataset needs at least one clip per class".into(),
        ));
    }
    let n_train = (n_per_class * 4).div_ceil(5);
    let mut entries = Vec::with_capacity(2 * n_per_class);
    let mut clips = BTreeMap::new();
    for label in [Label::Bonafide, Label::Spoof] {
        for i in 0..n_per_class {
            let split = if i < n_train {
                Split::Train
            } else {
                Split::Eval
            };
            let id = format!(
                "SYN_{}_{}{:05}",
                if split == Split::Train { 'T' } else { 'E' },
                if label == Label::Bonafide { 'B' } else { 'S' },
                i
            );
            let clip = synth_clip(label, seed, i as u64, id.clone());
            entries.push(TrialEntry {
                utterance_id: id.clone(),
                label,
                attack_id: (label == Label::Spoof).then(|| "SYN".to_string()),
                split,
                speaker_id: "SYN_0000".into(),
            });
            clips.insert(id, clip);
        }
    }
    Ok(Dataset {
        entries,
        clips: ClipSource::InMemory(clips),
    })
}
