//! ASVspoof countermeasure protocol listings.
//!
//! One trial per line, whitespace separated:
//! `SPEAKER UTTERANCE_ID - ATTACK_ID LABEL`, where the attack id is `-` for
//! bonafide trials.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    /// Class index used by the models and caches: 0 spoof, 1 bonafide.
    pub fn class_index(self) -> usize {
        match self {
            Label::Spoof => 0,
            Label::Bonafide => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Spoof),
            1 => Some(Label::Bonafide),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(format!("unknown label token {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub utterance_id: String,
    pub label: Label,
    pub attack_id: Option<String>,
    pub split: Split,
    /// First protocol column (speaker id); kept so listings can be re-emitted.
    pub speaker_id: String,
}

impl TrialEntry {
    /// Formats the entry as a protocol line.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} - {} {}",
            self.speaker_id,
            self.utterance_id,
            self.attack_id.as_deref().unwrap_or("-"),
            self.label
        )
    }
}

pub fn parse_protocol(path: impl AsRef<Path>, split: Split) -> Result<Vec<TrialEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_protocol_str(&text, split).map_err(|(line, detail)| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    })
}

/// Parses protocol text. Errors carry the 1-based line number.
pub fn parse_protocol_str(text: &str, split: Split) -> Result<Vec<TrialEntry>, (usize, String)> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 5 {
            return Err((
                i + 1,
                format!("expected at least 5 fields, found {}", fields.len()),
            ));
        }
        let label: Label = fields[fields.len() - 1].parse().map_err(|e| (i + 1, e))?;
        let attack = fields[3];
        entries.push(TrialEntry {
            utterance_id: fields[1].to_string(),
            label,
            attack_id: (attack != "-").then(|| attack.to_string()),
            split,
            speaker_id: fields[0].to_string(),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bonafide_line() {
        let e = parse_protocol_str("LA_0079 LA_T_1138215 - - bonafide\n", Split::Train).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].utterance_id, "LA_T_1138215");
        assert_eq!(e[0].label, Label::Bonafide);
        assert_eq!(e[0].attack_id, None);
    }

    #[test]
    fn spoof_line_keeps_attack() {
        let e = parse_protocol_str("LA_0079 LA_T_1271820 - A99 spoof", Split::Eval).unwrap();
        assert_eq!(e[0].attack_id.as_deref(), Some("A99"));
        assert_eq!(e[0].split, Split::Eval);
    }

    #[test]
    fn empty_input() {
        assert!(parse_protocol_str("", Split::Train).unwrap().is_empty());
        assert!(parse_protocol_str("\n  \n", Split::Train)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn short_line_reports_line_number() {
        let err = parse_protocol_str(
            "LA_1 LA_T_1 - - bonafide\nLA_1 LA_T_2 spoof\n",
            Split::Train,
        )
        .unwrap_err();
        assert_eq!(err.0, 2);
    }

    #[test]
    fn bad_label_rejected() {
        let err = parse_protocol_str("LA_1 LA_T_1 - - genuine", Split::Train).unwrap_err();
        assert_eq!(err.0, 1);
        assert!(err.1.contains("genuine"));
    }

    #[test]
    fn file_error_carries_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("proto.txt");
        std::fs::write(&p, "a b c\n").unwrap();
        let err = parse_protocol(&p, Split::Train).unwrap_err();
        assert!(err.to_string().contains("proto.txt:1"));
    }

    fn token() -> impl Strategy<Value = String> {
        "[A-Za-z0-9_]{1,12}"
    }

    proptest! {
        #[test]
        fn lines_round_trip(
            rows in proptest::collection::vec((token(), token(), proptest::option::of(token()), any::<bool>()), 0..20)
        ) {
            let entries: Vec<TrialEntry> = rows
                .into_iter()
                .map(|(spk, utt, attack, bona)| TrialEntry {
                    utterance_id: utt,
                    label: if bona { Label::Bonafide } else { Label::Spoof },
                    attack_id: attack,
                    split: Split::Train,
                    speaker_id: spk,
                })
                .collect();
            let text: String = entries.iter().map(|e| e.to_line() + "\n").collect();
            let back = parse_protocol_str(&text, Split::Train).unwrap();
            prop_assert_eq!(back, entries);
        }
    }
}
