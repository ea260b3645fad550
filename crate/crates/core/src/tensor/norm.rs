use std::cell::RefCell;
use std::rc::Rc;

use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// Running per-channel statistics of a batch-norm layer.
#[derive(Debug, Clone)]
pub struct BatchNormStats<T: Real> {
    pub mean: Rc<RefCell<Vec<T>>>,
    pub var: Rc<RefCell<Vec<T>>>,
}

impl<T: Real> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: Rc::new(RefCell::new(vec![T::zero(); channels])),
            var: Rc::new(RefCell::new(vec![T::one(); channels])),
        }
    }
}

/// Shared backward for normalizations: given `xhat`, the per-group inverse
/// deviation and the incoming gradient of `xhat` (already scaled by gamma),
/// returns the input gradient. Groups are described by `at(group, i)`.
fn normalize_backward<T: Real>(
    dxhat: &[T],
    xhat: &[T],
    inv_std: &[T],
    groups: usize,
    group_len: usize,
    at: impl Fn(usize, usize) -> usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); dxhat.len()];
    let m = T::lit(group_len as f64);
    for gi in 0..groups {
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for i in 0..group_len {
            let k = at(gi, i);
            sum_d += dxhat[k];
            sum_dx += dxhat[k] * xhat[k];
        }
        let s = inv_std[gi] / m;
        for i in 0..group_len {
            let k = at(gi, i);
            dx[k] = s * (m * dxhat[k] - sum_d - xhat[k] * sum_dx);
        }
    }
    dx
}

/// Batch normalization over `[N, C, H, W]`, per channel.
///
/// In training mode the batch statistics are used and the running statistics
/// are updated with momentum 0.1 (unbiased variance); in evaluation mode the
/// running statistics are used as constants.
pub fn batch_norm<T: Real>(
    x: &Var<T>,
    gamma: &Var<T>,
    beta: &Var<T>,
    stats: &BatchNormStats<T>,
    train: bool,
) -> Result<Var<T>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!(
            "batch_norm needs [N, C, H, W], got {s:?}"
        )));
    }
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.borrow().len() != c {
        return Err(Error::Shape(format!(
            "batch_norm: {c} channels but gamma {:?}",
            gamma.shape()
        )));
    }
    let m = n * hw;
    if train && m < 2 {
        return Err(Error::Contract(format!(
            "batch_norm in training mode needs at least 2 values per channel, got {m} (input {s:?})"
        )));
    }
    let at = move |ch: usize, i: usize| ((i / hw) * c + ch) * hw + i % hw;
    let eps = T::lit(BN_EPS);
    let xv = x.value();
    let xd = xv.data();
    let (mean, var): (Vec<T>, Vec<T>) = if train {
        let mut means = Vec::with_capacity(c);
        let mut vars = Vec::with_capacity(c);
        let mf = T::lit(m as f64);
        for ch in 0..c {
            let mu = (0..m).map(|i| xd[at(ch, i)]).sum::<T>() / mf;
            let v = (0..m).map(|i| (xd[at(ch, i)] - mu).powi(2)).sum::<T>() / mf;
            means.push(mu);
            vars.push(v);
        }
        let mom = T::lit(BN_MOMENTUM);
        let unbias = mf / T::lit((m - 1) as f64);
        let mut rm = stats.mean.borrow_mut();
        let mut rv = stats.var.borrow_mut();
        for ch in 0..c {
            rm[ch] = (T::one() - mom) * rm[ch] + mom * means[ch];
            rv[ch] = (T::one() - mom) * rv[ch] + mom * vars[ch] * unbias;
        }
        (means, vars)
    } else {
        (stats.mean.borrow().clone(), stats.var.borrow().clone())
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut out = Tensor::zeros(&s);
    {
        let (gv, bv) = (gamma.value(), beta.value());
        let od = out.data_mut();
        for ch in 0..c {
            let (g, b) = (gv.data()[ch], bv.data()[ch]);
            for i in 0..m {
                let k = at(ch, i);
                xhat[k] = (xd[k] - mean[ch]) * inv_std[ch];
                od[k] = g * xhat[k] + b;
            }
        }
    }
    drop(xv);
    let gc = gamma.clone();
    Ok(Var::from_op(out, &[x, gamma, beta], move |g| {
        let gd = g.data();
        let gv = gc.value();
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        let mut dxhat = vec![T::zero(); gd.len()];
        for ch in 0..c {
            let gam = gv.data()[ch];
            for i in 0..m {
                let k = at(ch, i);
                dgamma.data_mut()[ch] += gd[k] * xhat[k];
                dbeta.data_mut()[ch] += gd[k];
                dxhat[k] = gd[k] * gam;
            }
        }
        let dx = if train {
            normalize_backward(&dxhat, &xhat, &inv_std, c, m, at)
        } else {
            let mut dx = dxhat;
            for ch in 0..c {
                for i in 0..m {
                    dx[at(ch, i)] *= inv_std[ch];
                }
            }
            dx
        };
        vec![
            Some(Tensor::from_vec(&s, dx).expect("same shape")),
            Some(dgamma),
            Some(dbeta),
        ]
    }))
}

/// Layer normalization over the last dimension.
pub fn layer_norm<T: Real>(x: &Var<T>, gamma: &Var<T>, beta: &Var<T>) -> Result<Var<T>> {
    let s = x.shape();
    let d = *s
        .last()
        .ok_or_else(|| Error::Shape("layer_norm on a scalar".into()))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::Shape(format!(
            "layer_norm over {d} features with gamma {:?} beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let rows = x.value().numel() / d;
    let eps = T::lit(LN_EPS);
    let df = T::lit(d as f64);
    let mut xhat = vec![T::zero(); rows * d];
    let mut inv_std = vec![T::zero(); rows];
    let mut out = Tensor::zeros(&s);
    {
        let (xv, gv, bv) = (x.value(), gamma.value(), beta.value());
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mu = row.iter().copied().sum::<T>() / df;
            let var = row.iter().map(|&v| (v - mu).powi(2)).sum::<T>() / df;
            inv_std[r] = T::one() / (var + eps).sqrt();
            for j in 0..d {
                let k = r * d + j;
                xhat[k] = (row[j] - mu) * inv_std[r];
                out.data_mut()[k] = gv.data()[j] * xhat[k] + bv.data()[j];
            }
        }
    }
    let gc = gamma.clone();
    Ok(Var::from_op(out, &[x, gamma, beta], move |g| {
        let gd = g.data();
        let gv = gc.value();
        let mut dgamma = Tensor::zeros(&[d]);
        let mut dbeta = Tensor::zeros(&[d]);
        let mut dxhat = vec![T::zero(); gd.len()];
        for r in 0..rows {
            for j in 0..d {
                let k = r * d + j;
                dgamma.data_mut()[j] += gd[k] * xhat[k];
                dbeta.data_mut()[j] += gd[k];
                dxhat[k] = gd[k] * gv.data()[j];
            }
        }
        let dx = normalize_backward(&dxhat, &xhat, &inv_std, rows, d, |r, j| r * d + j);
        vec![
            Some(Tensor::from_vec(&s, dx).expect("same shape")),
            Some(dgamma),
            Some(dbeta),
        ]
    }))
}
