//! `QVCK` checkpoints: magic, version u32, u32 config length + JSON config,
//! u32 entry count, then per entry u32 name length + name, u32 rank, u32
//! dims, little-endian f32 values. Entries are the parameters followed by
//! the batch-norm running statistics.

use std::collections::HashMap;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"QVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config()).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);

    let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = model
        .params()
        .iter()
        .map(|p| {
            let v = p.var.value();
            (p.name.clone(), v.shape().to_vec(), v.data().to_vec())
        })
        .collect();
    for (name, buf) in model.buffers() {
        let b = buf.borrow();
        entries.push((name, vec![b.len()], b.clone()));
    }
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, data) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::Data(format!("checkpoint truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Data("not a QVCK checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let cfg_len = r.u32("config length")? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(cfg_len, "config")?)
        .map_err(|e| Error::Data(format!("checkpoint config: {e}")))?;
    let count = r.u32("entry count")? as usize;
    let mut entries: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Data("checkpoint entry name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Data("entry too large".into()))?,
            &name,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if entries.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Data(format!("duplicate checkpoint entry {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Data(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }

    let model = Model::build(cfg)?;
    for p in model.params() {
        let (shape, data) = entries
            .remove(&p.name)
            .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {}", p.name)))?;
        let mut v = p.var.value_mut();
        if shape != v.shape() {
            return Err(Error::Data(format!(
                "parameter {} has shape {shape:?} in checkpoint, model expects {:?}",
                p.name,
                v.shape()
            )));
        }
        v.data_mut().copy_from_slice(&data);
    }
    for (name, buf) in model.buffers() {
        let (_, data) = entries
            .remove(&name)
            .ok_or_else(|| Error::Data(format!("checkpoint lacks buffer {name}")))?;
        let mut b = buf.borrow_mut();
        if data.len() != b.len() {
            return Err(Error::Data(format!(
                "buffer {name} has {} values, expected {}",
                data.len(),
                b.len()
            )));
        }
        b.copy_from_slice(&data);
    }
    if let Some(extra) = entries.keys().next() {
        return Err(Error::Data(format!(
            "checkpoint entry {extra} does not belong to the model"
        )));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
