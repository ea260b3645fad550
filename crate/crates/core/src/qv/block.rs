use rand::Rng;

use super::{basis_tag, basis_waves, Axis, Provenance, QVConfig, WaveStack, MAPS_PER_CHANNEL};
use crate::error::{Error, Result};
use crate::tensor::nn::{Conv2d, Param};
use crate::tensor::{ops, Real, Var};

/// One basis direction's stack of conv + ReLU stages.
pub struct QvBranch<T: Real = f32> {
    pub axis: Axis,
    pub m: i32,
    pub layers: Vec<Conv2d<T>>,
}

/// Trainable superposition of the basis maps: each of the eight
/// (axis, m) directions runs its own branch and the branch outputs are
/// summed into `filters` wave maps.
pub struct QvBlock<T: Real = f32> {
    pub cfg: QVConfig,
    pub branches: Vec<QvBranch<T>>,
}

impl<T: Real> QvBlock<T> {
    pub fn new(prefix: &str, cfg: QVConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let branches = (0..MAPS_PER_CHANNEL)
            .map(|j| {
                let (axis, m) = basis_tag(j);
                let layers = (0..cfg.depth)
                    .map(|l| {
                        let cin = if l == 0 { cfg.in_channels } else { cfg.filters };
                        Conv2d::new(
                            &format!("{prefix}.{axis}{m:+}.{l}"),
                            cin,
                            cfg.filters,
                            cfg.kernel,
                            rng,
                        )
                    })
                    .collect();
                QvBranch { axis, m, layers }
            })
            .collect();
        Ok(QvBlock { cfg, branches })
    }

    /// `[N, C, H, W]` image to `[N, filters, H, W]` wave maps.
    pub fn forward(&self, img: &Var<T>) -> Result<Var<T>> {
        let s = img.shape();
        if s.len() != 4 || s[1] != self.cfg.in_channels {
            return Err(Error::Shape(format!(
                "qv block expects [N, {}, H, W], got {s:?}",
                self.cfg.in_channels
            )));
        }
        self.forward_basis(&basis_waves(img)?)
    }

    pub fn forward_basis(&self, basis: &WaveStack<T>) -> Result<Var<T>> {
        if basis.provenance != Provenance::Basis {
            return Err(Error::Contract("qv block needs a basis wave stack".into()));
        }
        let c = basis.channels();
        if c != self.cfg.in_channels {
            return Err(Error::Shape(format!(
                "basis stack has {c} channels, qv block expects {}",
                self.cfg.in_channels
            )));
        }
        if self.cfg.depth == 1 {
            let w: Vec<Var<T>> = self
                .branches
                .iter()
                .map(|b| b.layers[0].weight.var.clone())
                .collect();
            let bias: Vec<Var<T>> = self
                .branches
                .iter()
                .map(|b| b.layers[0].bias.var.clone())
                .collect();
            return ops::grouped_relu_sum(&basis.maps, &w, &bias);
        }
        self.forward_branches(basis)
    }

    /// Branch-by-branch evaluation through the generic ops; same result as
    /// [`QvBlock::forward_basis`].
    pub fn forward_branches(&self, basis: &WaveStack<T>) -> Result<Var<T>> {
        let c = basis.channels();
        let mut outs = Vec::with_capacity(self.branches.len());
        for (j, branch) in self.branches.iter().enumerate() {
            let index: Vec<usize> = (0..c).map(|ch| ch * MAPS_PER_CHANNEL + j).collect();
            let mut h = ops::select_channels(&basis.maps, &index)?;
            for conv in &branch.layers {
                h = ops::relu(&conv.forward(&h)?);
            }
            outs.push(h);
        }
        ops::add_n(&outs)
    }

    pub fn params(&self, out: &mut Vec<Param<T>>) {
        for b in &self.branches {
            for l in &b.layers {
                l.params(out);
            }
        }
    }
}
