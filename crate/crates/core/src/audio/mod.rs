//! Audio input: WAV decoding, resampling, protocol listings and a synthetic
//! bonafide/spoof corpus.

mod protocol;
mod resample;
mod synth;
mod wav;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use protocol::{parse_protocol, parse_protocol_str, Label, Split, TrialEntry};
pub use resample::{resample, TAPS_PER_PHASE};
pub use synth::{synth_clip, synth_dataset, SYNTH_SAMPLE_RATE};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, SampleEncoding};

use crate::error::{Error, Result};

/// Mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Contract(format!("sample {i} is outside [-1, 1]")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Where a dataset finds the audio for an utterance id.
#[derive(Debug, Clone)]
pub enum ClipSource {
    InMemory(BTreeMap<String, AudioClip>),
    /// `<dir>/<utterance_id>.wav`
    Directory(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub entries: Vec<TrialEntry>,
    pub clips: ClipSource,
}

impl Dataset {
    pub fn from_directory(entries: Vec<TrialEntry>, dir: impl AsRef<Path>) -> Self {
        Dataset {
            entries,
            clips: ClipSource::Directory(dir.as_ref().to_path_buf()),
        }
    }

    pub fn clip_path(&self, utterance_id: &str) -> Option<PathBuf> {
        match &self.clips {
            ClipSource::Directory(dir) => Some(dir.join(format!("{utterance_id}.wav"))),
            ClipSource::InMemory(_) => None,
        }
    }

    pub fn clip(&self, utterance_id: &str) -> Result<AudioClip> {
        match &self.clips {
            ClipSource::InMemory(map) => map
                .get(utterance_id)
                .cloned()
                .ok_or_else(|| Error::Data(format!("no clip for utterance {utterance_id}"))),
            ClipSource::Directory(dir) => read_wav(dir.join(format!("{utterance_id}.wav"))),
        }
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.entries
            .iter()
            .filter(|e| e.split == split && e.label == label)
            .count()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &TrialEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}
