use rayon::prelude::*;

use super::{FeatureConfig, FeatureExtractor, FeatureKind, FeatureRecord};
use crate::audio::{resample, Dataset, TrialEntry};
use crate::error::{Error, Result};

/// Features for a list of trials, in trial order.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub records: Vec<FeatureRecord>,
    pub ids: Vec<String>,
    /// Trials whose audio file does not exist.
    pub missing: Vec<String>,
}

/// Extracts one feature image per trial, resampling clips to the configured
/// rate first. Trials without an audio file are skipped and listed.
pub fn extract_entries(
    dataset: &Dataset,
    entries: &[&TrialEntry],
    kind: FeatureKind,
    cfg: &FeatureConfig,
) -> Result<Extraction> {
    let fx = FeatureExtractor::new(cfg.clone())?;
    let results: Vec<Result<Option<FeatureRecord>>> = entries
        .par_iter()
        .map(|e| {
            if dataset
                .clip_path(&e.utterance_id)
                .is_some_and(|p| !p.exists())
            {
                return Ok(None);
            }
            let mut clip = dataset.clip(&e.utterance_id)?;
            if clip.sample_rate != cfg.sample_rate {
                clip = resample(&clip, cfg.sample_rate)?;
            }
            let image = fx.extract(&clip, kind)?;
            Ok(Some(FeatureRecord {
                label: e.label,
                image,
            }))
        })
        .collect();
    let mut out = Extraction {
        records: Vec::new(),
        ids: Vec::new(),
        missing: Vec::new(),
    };
    for (e, r) in entries.iter().zip(results) {
        match r? {
            Some(rec) => {
                out.records.push(rec);
                out.ids.push(e.utterance_id.clone());
            }
            None => out.missing.push(e.utterance_id.clone()),
        }
    }
    Ok(out)
}

/// Like [`extract_entries`] but fails when nothing could be extracted.
pub fn extract_required(
    dataset: &Dataset,
    entries: &[&TrialEntry],
    kind: FeatureKind,
    cfg: &FeatureConfig,
) -> Result<Extraction> {
    let out = extract_entries(dataset, entries, kind, cfg)?;
    if out.records.is_empty() {
        return Err(Error::Data(format!(
            "none of the {} listed trials has an audio file",
            entries.len()
        )));
    }
    Ok(out)
}
