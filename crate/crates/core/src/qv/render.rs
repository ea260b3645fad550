use std::fs;
use std::path::{Path, PathBuf};

use super::WaveStack;
use crate::error::{Error, Result};
use crate::tensor::Real;

/// Min-max normalizes a map to 8-bit gray; a constant map is mid-gray.
pub fn to_gray<T: Real>(map: &[T]) -> Vec<u8> {
    let lo = map.iter().map(|v| v.as_f64()).fold(f64::INFINITY, f64::min);
    let hi = map
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; map.len()];
    }
    map.iter()
        .map(|v| {
            ((v.as_f64() - lo) / (hi - lo) * 255.0)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect()
}

fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Writes every map of the stack as a binary PGM named after its tag.
/// Stacks holding several samples get an `_n<i>` suffix per sample.
pub fn render_waves<T: Real>(stack: &WaveStack<T>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if stack.is_empty() {
        return Err(Error::Contract(
            "nothing to render: empty wave stack".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let v = stack.maps.value();
    let s = v.shape();
    let (n, k, h, w) = (s[0], s[1], s[2], s[3]);
    let channels = stack.channels();
    let mut written = Vec::with_capacity(n * k);
    for b in 0..n {
        for (j, tag) in stack.tags.iter().enumerate() {
            let mut stem = tag.file_stem(channels);
            if n > 1 {
                stem.push_str(&format!("_n{b}"));
            }
            let path = out_dir.join(format!("{stem}.pgm"));
            let map = &v.data()[(b * k + j) * h * w..][..h * w];
            fs::write(&path, pgm(w, h, &to_gray(map))).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
