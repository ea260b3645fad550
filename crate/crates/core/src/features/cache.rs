//! QVFC feature cache.
//!
//! Layout (little-endian): magic `QVFC`, version `u32`, record count `u64`,
//! then per record: label `u8` (0 spoof, 1 bonafide), height `u32`,
//! width `u32`, channels `u32`, and `height * width * channels` `f32`
//! values in `(y, x, C)` row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{FeatureImage, FeatureKind};
use crate::audio::Label;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"QVFC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub label: Label,
    pub image: FeatureImage,
}

pub fn encode_cache(records: &[FeatureRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        out.push(r.label.class_index() as u8);
        let (h, w, c) = r.image.shape();
        for d in [h, w, c] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &r.image.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_cache(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_cache(records))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    "QVFC",
                    format!("truncated while reading {what} at byte {}", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_cache(bytes: &[u8]) -> Result<Vec<FeatureRecord>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CACHE_MAGIC {
        return Err(Error::format("QVFC", "bad magic"));
    }
    let version = r.u32("version")?;
    if version != CACHE_VERSION {
        return Err(Error::format(
            "QVFC",
            format!("unsupported version {version}"),
        ));
    }
    let count = u64::from_le_bytes(r.take(8, "record count")?.try_into().unwrap()) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let label_byte = r.take(1, "label")?[0];
        let label = Label::from_class_index(label_byte as usize)
            .ok_or_else(|| Error::format("QVFC", format!("record {i}: label byte {label_byte}")))?;
        let h = r.u32("height")? as usize;
        let w = r.u32("width")? as usize;
        let c = r.u32("channels")? as usize;
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::format("QVFC", format!("record {i}: dims overflow")))?;
        let raw = r.take(n * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let image = FeatureImage::new(data, h, w, c, FeatureKind::Generic)
            .map_err(|e| Error::format("QVFC", format!("record {i}: {e}")))?;
        records.push(FeatureRecord { label, image });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            "QVFC",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(records)
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let img = FeatureImage::new(vec![1.5, -2.0], 1, 2, 1, FeatureKind::Mel).unwrap();
        let bytes = encode_cache(&[FeatureRecord {
            label: Label::Bonafide,
            image: img,
        }]);
        assert_eq!(&bytes[0..4], b"QVFC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(bytes[16], 1);
        assert_eq!(&bytes[17..21], &1u32.to_le_bytes());
        assert_eq!(&bytes[21..25], &2u32.to_le_bytes());
        assert_eq!(&bytes[25..29], &1u32.to_le_bytes());
        assert_eq!(&bytes[29..33], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 37);
    }

    #[test]
    fn round_trip() {
        let recs: Vec<FeatureRecord> = (0..3)
            .map(|i| FeatureRecord {
                label: if i % 2 == 0 {
                    Label::Spoof
                } else {
                    Label::Bonafide
                },
                image: FeatureImage::new(
                    (0..12).map(|v| v as f64 * 0.5 - i as f64).collect(),
                    2,
                    3,
                    2,
                    FeatureKind::Generic,
                )
                .unwrap(),
            })
            .collect();
        assert_eq!(decode_cache(&encode_cache(&recs)).unwrap(), recs);
    }

    #[test]
    fn truncation_detected() {
        let img = FeatureImage::zeros(2, 2, 1, FeatureKind::Generic);
        let bytes = encode_cache(&[FeatureRecord {
            label: Label::Spoof,
            image: img,
        }]);
        assert!(decode_cache(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_cache(b"QVFX").is_err());
    }
}
