//! Accuracy, equal error rate and confusion matrices over scored trials.
//!
//! Bonafide is the positive class and a trial is accepted iff its score is
//! at least the threshold.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub ids: Vec<String>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>, ids: Vec<String>) -> Result<Self> {
        if scores.len() != labels.len() || ids.len() != labels.len() {
            return Err(Error::Contract(format!(
                "score set lengths differ: {} scores, {} labels, {} ids",
                scores.len(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!(
                "score of trial {} is not finite",
                ids[i]
            )));
        }
        Ok(ScoreSet {
            scores,
            labels,
            ids,
        })
    }

    /// Anonymous trials numbered from 0.
    pub fn unnamed(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        Self::new(scores, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Counts `[actual][predicted]`, index 0 bonafide, 1 spoof.
pub type Confusion = [[u64; 2]; 2];

fn row(label: Label) -> usize {
    match label {
        Label::Bonafide => 0,
        Label::Spoof => 1,
    }
}

pub fn confusion(set: &ScoreSet, threshold: f64) -> Confusion {
    let mut m = [[0u64; 2]; 2];
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        let predicted = if s >= threshold { 0 } else { 1 };
        m[row(l)][predicted] += 1;
    }
    m
}

pub fn accuracy(set: &ScoreSet, threshold: f64) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let m = confusion(set, threshold);
    (m[0][0] + m[1][1]) as f64 / set.len() as f64
}

/// Accuracy of the argmax decision over `(spoof, bonafide)` logit pairs;
/// an exact tie goes to the first class.
pub fn accuracy_argmax(logits: &[[f64; 2]], labels: &[Label]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(z, &l)| {
            let predicted = if z[1] > z[0] {
                Label::Bonafide
            } else {
                Label::Spoof
            };
            predicted == l
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Argmax accuracy when scores are logit differences.
pub fn accuracy_score_sign(set: &ScoreSet) -> f64 {
    let logits: Vec<[f64; 2]> = set.scores.iter().map(|&s| [0.0, s]).collect();
    accuracy_argmax(&logits, &set.labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate. FAR and FRR are evaluated at every cut between
/// adjacent distinct scores: accept-all (threshold = lowest score), the
/// interior cuts (threshold = each higher distinct score) and reject-all
/// (threshold just above the highest). Candidates are the common value where
/// FAR - FRR is exactly zero and the chord between the last interior cut with
/// FAR > FRR and the first interior cut with FAR < FRR; the smaller wins. Only
/// when neither exists does the chord extend to the accept-all or reject-all
/// cut. An interpolated threshold within rounding distance of a score is
/// snapped to that score.
pub fn eer(set: &ScoreSet) -> Result<Eer> {
    let (nb, ns) = (set.count(Label::Bonafide), set.count(Label::Spoof));
    if nb == 0 || ns == 0 {
        return Err(Error::Contract(format!(
            "EER needs both classes, got {nb} bonafide and {ns} spoof"
        )));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    // (threshold, far, frr) per cut, ascending threshold
    let mut cuts: Vec<(f64, f64, f64)> = Vec::new();
    let (mut bona_below, mut spoof_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = set.scores[order[i]];
        cuts.push((
            t,
            (ns - spoof_below) as f64 / ns as f64,
            bona_below as f64 / nb as f64,
        ));
        while i < order.len() && set.scores[order[i]] == t {
            match set.labels[order[i]] {
                Label::Bonafide => bona_below += 1,
                Label::Spoof => spoof_below += 1,
            }
            i += 1;
        }
    }
    let top = set.scores[order[order.len() - 1]];
    cuts.push((top.next_up(), 0.0, 1.0));

    let d = |c: &(f64, f64, f64)| c.1 - c.2;
    let last = cuts.len() - 1;
    let interior = &cuts[1..last];
    let tie = interior.iter().find(|c| d(c) == 0.0).map(|c| Eer {
        eer: c.1,
        threshold: c.0,
    });
    let pos = interior.iter().rposition(|c| d(c) > 0.0).map(|k| k + 1);
    let neg = interior.iter().position(|c| d(c) < 0.0).map(|k| k + 1);
    let bracket = match (pos, neg) {
        (Some(p), Some(n)) => Some((p, n)),
        _ if tie.is_some() => None,
        (p, n) => Some((p.unwrap_or(0), n.unwrap_or(last))),
    };
    let chord = bracket.map(|(p, n)| {
        let (a, b) = (cuts[p], cuts[n]);
        let alpha = d(&a) / (d(&a) - d(&b));
        let mut threshold = a.0 + alpha * (b.0 - a.0);
        if let Some(c) = cuts[p..=n]
            .iter()
            .find(|c| (c.0 - threshold).abs() <= 1e-12 * c.0.abs().max(1.0))
        {
            threshold = c.0;
        }
        Eer {
            eer: a.1 + alpha * (b.1 - a.1),
            threshold,
        }
    });
    Ok(match (tie, chord) {
        (Some(t), Some(c)) if c.eer < t.eer => c,
        (Some(t), _) => t,
        (None, Some(c)) => c,
        (None, None) => unreachable!("either a tie or a bracketing chord exists"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_argmax: f64,
    pub accuracy_at_eer: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub confusion: Confusion,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

pub fn report(set: &ScoreSet) -> Result<EvalReport> {
    let e = eer(set)?;
    Ok(EvalReport {
        accuracy_argmax: accuracy_score_sign(set),
        accuracy_at_eer: accuracy(set, e.threshold),
        eer: e.eer,
        eer_threshold: e.threshold,
        confusion: confusion(set, e.threshold),
        n_bonafide: set.count(Label::Bonafide),
        n_spoof: set.count(Label::Spoof),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad report JSON: {e}")))
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("actual,predicted,count\n");
        let names = ["bonafide", "spoof"];
        for (a, row) in self.confusion.iter().enumerate() {
            for (p, n) in row.iter().enumerate() {
                writeln!(out, "{},{},{n}", names[a], names[p]).unwrap();
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.confusion_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Bonafide as B, Spoof as S};

    fn set(bona: &[f64], spoof: &[f64]) -> ScoreSet {
        let scores = bona.iter().chain(spoof).copied().collect();
        let labels = bona
            .iter()
            .map(|_| B)
            .chain(spoof.iter().map(|_| S))
            .collect();
        ScoreSet::unnamed(scores, labels).unwrap()
    }

    fn hand_example() -> ScoreSet {
        set(&[0.9, 0.8, 0.7, 0.6], &[0.65, 0.3, 0.2, 0.1])
    }

    #[test]
    fn perfect_separation() {
        let s = set(&[2.0, 3.0], &[0.0, 1.0]);
        let e = eer(&s).unwrap();
        assert_eq!(e.eer, 0.0);
        assert_eq!(confusion(&s, e.threshold), [[2, 0], [0, 2]]);
        // logit differences straddling zero
        let r = report(&set(&[2.0, 3.0], &[-1.0, -0.5])).unwrap();
        assert_eq!(
            (r.eer, r.accuracy_at_eer, r.accuracy_argmax),
            (0.0, 1.0, 1.0)
        );
    }

    #[test]
    fn perfect_inversion() {
        assert_eq!(eer(&set(&[0.0, 0.0], &[1.0, 1.0])).unwrap().eer, 1.0);
    }

    #[test]
    fn hand_derived_example() {
        let s = hand_example();
        let e = eer(&s).unwrap();
        assert!((e.eer - 0.125).abs() < 1e-12);
        assert!(e.threshold >= 0.65 && e.threshold <= 0.7);
        assert_eq!(confusion(&s, e.threshold), [[3, 1], [1, 3]]);
        assert_eq!(accuracy(&s, e.threshold), 0.75);
    }

    #[test]
    fn thresholds_below_everything() {
        let s = hand_example();
        assert_eq!(confusion(&s, -1.0), [[4, 0], [4, 0]]);
        let same = set(&[0.3; 3], &[0.3; 3]);
        for t in [-1.0, 0.3, 1.0] {
            assert_eq!(accuracy(&same, t), 0.5);
        }
        assert_eq!(eer(&same).unwrap().eer, 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(eer(&set(&[1.0], &[])).is_err());
    }

    #[test]
    fn argmax_accuracy() {
        let logits = [[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        assert_eq!(accuracy_argmax(&logits, &[B, S, S]), 1.0);
        assert_eq!(accuracy_argmax(&logits, &[S, S, B]), 1.0 / 3.0);
    }

    #[test]
    fn report_json_round_trip_and_csv() {
        let r = report(&hand_example()).unwrap();
        let json = r.to_json();
        let keys: Vec<usize> = [
            "accuracy_argmax",
            "accuracy_at_eer",
            "eer\"",
            "eer_threshold",
            "confusion",
            "n_bonafide",
            "n_spoof",
        ]
        .iter()
        .map(|k| json.find(k).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(EvalReport::from_json(&json).unwrap(), r);
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 8);
        assert_eq!(
            r.confusion_csv(),
            "actual,predicted,count\nbonafide,bonafide,3\nbonafide,spoof,1\nspoof,bonafide,1\nspoof,spoof,3\n"
        );
    }
}
