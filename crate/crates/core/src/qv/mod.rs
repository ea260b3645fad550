//! Information-wave transform: shifted-difference basis maps, their linear
//! and convolutional superpositions, and grayscale rendering.

mod block;
mod render;

pub use block::{QvBlock, QvBranch};
pub use render::{render_waves, to_gray};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Shift indices in map order.
pub const SHIFTS: [i32; 4] = [-1, 1, -2, 2];
/// Basis maps per input channel.
pub const MAPS_PER_CHANNEL: usize = 2 * SHIFTS.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVConfig {
    pub shifts: Vec<i32>,
    pub filters: usize,
    pub depth: usize,
    pub kernel: usize,
    pub in_channels: usize,
}

impl Default for QVConfig {
    fn default() -> Self {
        QVConfig {
            shifts: SHIFTS.to_vec(),
            filters: 128,
            depth: 1,
            kernel: 3,
            in_channels: 1,
        }
    }
}

impl QVConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shifts != SHIFTS {
            return Err(Error::Config(format!(
                "qv shifts must be {SHIFTS:?} (m = 0 carries no wave), got {:?}",
                self.shifts
            )));
        }
        if self.depth != 1 && self.depth != 3 {
            return Err(Error::Config(format!(
                "qv depth must be 1 or 3, got {}",
                self.depth
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "qv kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.filters == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "qv filters and in_channels must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn max_shift(&self) -> usize {
        self.shifts
            .iter()
            .map(|m| m.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Basis,
    Squared,
    Superposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveTag {
    Basis { axis: Axis, m: i32, channel: usize },
    Output(usize),
}

impl WaveTag {
    /// File stem used when rendering; `channels` disambiguates multi-channel
    /// basis stacks.
    pub fn file_stem(&self, channels: usize) -> String {
        match *self {
            WaveTag::Basis { axis, m, channel } if channels > 1 => {
                format!("wave_{axis}_{m:+}_c{channel}")
            }
            WaveTag::Basis { axis, m, .. } => format!("wave_{axis}_{m:+}"),
            WaveTag::Output(k) => format!("wave_out_{k}"),
        }
    }
}

/// Map index `j` within a channel's group of eight.
pub fn basis_tag(j: usize) -> (Axis, i32) {
    let axis = if j < SHIFTS.len() { Axis::X } else { Axis::Y };
    (axis, SHIFTS[j % SHIFTS.len()])
}

/// Ordered maps `[N, K, H, W]` with one tag per map.
#[derive(Debug, Clone)]
pub struct WaveStack<T: Real = f32> {
    pub maps: Var<T>,
    pub provenance: Provenance,
    pub tags: Vec<WaveTag>,
}

impl<T: Real> WaveStack<T> {
    /// Wraps precomputed basis maps `[N, 8C, H, W]` in the standard order.
    pub fn from_basis_maps(maps: Var<T>) -> Result<Self> {
        let s = maps.shape();
        if s.len() != 4 || s[1] == 0 || s[1] % MAPS_PER_CHANNEL != 0 {
            return Err(Error::Shape(format!(
                "basis stack needs [N, 8C, H, W], got {s:?}"
            )));
        }
        let tags = basis_tags(s[1] / MAPS_PER_CHANNEL);
        Ok(WaveStack {
            maps,
            provenance: Provenance::Basis,
            tags,
        })
    }

    pub fn from_output(maps: Var<T>) -> Result<Self> {
        let s = maps.shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "wave stack needs [N, K, H, W], got {s:?}"
            )));
        }
        let tags = (0..s[1]).map(WaveTag::Output).collect();
        Ok(WaveStack {
            maps,
            provenance: Provenance::Superposed,
            tags,
        })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Input channels represented by a basis stack.
    pub fn channels(&self) -> usize {
        match self.provenance {
            Provenance::Basis | Provenance::Squared => self.len() / MAPS_PER_CHANNEL,
            Provenance::Superposed => self.len(),
        }
    }
}

fn basis_tags(channels: usize) -> Vec<WaveTag> {
    (0..channels * MAPS_PER_CHANNEL)
        .map(|k| {
            let (axis, m) = basis_tag(k % MAPS_PER_CHANNEL);
            WaveTag::Basis {
                axis,
                m,
                channel: k / MAPS_PER_CHANNEL,
            }
        })
        .collect()
}

/// Source offset inside one `H x W` plane for every cell of the map shifted
/// by `m` along `axis`, clamping reads to the border.
fn shift_index(h: usize, w: usize, axis: Axis, m: i32) -> Vec<usize> {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut idx = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = match axis {
                Axis::X => (y, clamp(x as isize - m as isize, w)),
                Axis::Y => (clamp(y as isize - m as isize, h), x),
            };
            idx.push(sy * w + sx);
        }
    }
    idx
}

/// The eight shifted-difference maps per channel:
/// `psi_x_m(x, y) = I(x - m, y) - I(x, y)` and `psi_y_m(x, y) = I(x, y - m) - I(x, y)`,
/// ordered channel-major, then x before y, then m in `-1, +1, -2, +2`.
pub fn basis_waves<T: Real>(img: &Var<T>) -> Result<WaveStack<T>> {
    let s = img.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!(
            "basis_waves needs [N, C, H, W], got {s:?}"
        )));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let reach = 2 * SHIFTS
        .iter()
        .map(|m| m.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    if h <= reach || w <= reach {
        return Err(Error::Contract(format!(
            "image {h}x{w} is too small for shifts up to 2; both sides must exceed {reach}"
        )));
    }
    let hw = h * w;
    let tables: Vec<Vec<usize>> = (0..MAPS_PER_CHANNEL)
        .map(|j| {
            let (axis, m) = basis_tag(j);
            shift_index(h, w, axis, m)
        })
        .collect();
    let k = c * MAPS_PER_CHANNEL;
    let mut out = Tensor::zeros(&[n, k, h, w]);
    {
        let xv = img.value();
        let (xd, od) = (xv.data(), out.data_mut());
        for b in 0..n {
            for ch in 0..c {
                let plane = &xd[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                for (j, table) in tables.iter().enumerate() {
                    let o = &mut od[(b * k + ch * MAPS_PER_CHANNEL + j) * hw..][..hw];
                    for (i, v) in o.iter_mut().enumerate() {
                        *v = plane[table[i]] - plane[i];
                    }
                }
            }
        }
    }
    let maps = Var::from_op(out, &[img], move |g| {
        let mut gx = Tensor::zeros(&s);
        let (gd, gxd) = (g.data(), gx.data_mut());
        for b in 0..n {
            for ch in 0..c {
                let plane = &mut gxd[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                for (j, table) in tables.iter().enumerate() {
                    let gi = &gd[(b * k + ch * MAPS_PER_CHANNEL + j) * hw..][..hw];
                    for (i, &v) in gi.iter().enumerate() {
                        plane[table[i]] += v;
                        plane[i] -= v;
                    }
                }
            }
        }
        vec![Some(gx)]
    });
    Ok(WaveStack {
        maps,
        provenance: Provenance::Basis,
        tags: basis_tags(c),
    })
}

fn require_basis<T: Real>(stack: &WaveStack<T>, op: &str) -> Result<()> {
    if stack.provenance != Provenance::Basis {
        return Err(Error::Contract(format!(
            "{op} needs a basis wave stack, got {:?}",
            stack.provenance
        )));
    }
    Ok(())
}

/// Per channel, `sum_m a_m psi_x_m + b_m psi_y_m`, coefficients in shift order.
/// Output `[N, C, H, W]`.
pub fn superpose_linear<T: Real>(
    stack: &WaveStack<T>,
    a: [f64; 4],
    b: [f64; 4],
) -> Result<Tensor<T>> {
    require_basis(stack, "superpose_linear")?;
    let v = stack.maps.value();
    let s = v.shape();
    let (n, c, hw) = (s[0], s[1] / MAPS_PER_CHANNEL, s[2] * s[3]);
    let coef: Vec<T> = a.iter().chain(&b).map(|&x| T::lit(x)).collect();
    let mut out = Tensor::zeros(&[n, c, s[2], s[3]]);
    for plane in 0..n * c {
        let o = &mut out.data_mut()[plane * hw..(plane + 1) * hw];
        for (j, &cf) in coef.iter().enumerate() {
            let src = &v.data()[(plane * MAPS_PER_CHANNEL + j) * hw..][..hw];
            for (acc, &x) in o.iter_mut().zip(src) {
                *acc += cf * x;
            }
        }
    }
    Ok(out)
}

/// Elementwise square of every basis map, for visualization.
pub fn magnitude_square<T: Real>(stack: &WaveStack<T>) -> Result<WaveStack<T>> {
    require_basis(stack, "magnitude_square")?;
    let sq = stack.maps.value().map(|v| v * v);
    Ok(WaveStack {
        maps: Var::constant(sq),
        provenance: Provenance::Squared,
        tags: stack.tags.clone(),
    })
}
