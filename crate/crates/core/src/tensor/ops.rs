//! Differentiable tensor operations.

use super::array::strides;
use super::real::gemm;
use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

pub use super::conv::{conv2d, grouped_relu_sum, max_pool2d};
pub use super::norm::{batch_norm, layer_norm, BatchNormStats, BN_EPS, BN_MOMENTUM, LN_EPS};

fn same_shape<T: Real>(op: &str, a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn add<T: Real>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("add", a, b)?;
    let out = a.value().zip_map(&b.value(), |x, y| x + y);
    Ok(Var::from_op(out, &[a, b], |g| {
        vec![Some(g.clone()), Some(g.clone())]
    }))
}

pub fn sub<T: Real>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("sub", a, b)?;
    let out = a.value().zip_map(&b.value(), |x, y| x - y);
    Ok(Var::from_op(out, &[a, b], |g| {
        vec![Some(g.clone()), Some(g.map(|v| -v))]
    }))
}

pub fn mul<T: Real>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("mul", a, b)?;
    let out = a.value().zip_map(&b.value(), |x, y| x * y);
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Var::from_op(out, &[a, b], move |g| {
        vec![
            Some(g.zip_map(&bc.value(), |g, y| g * y)),
            Some(g.zip_map(&ac.value(), |g, x| g * x)),
        ]
    }))
}

/// Sum of several same-shaped vars.
pub fn add_n<T: Real>(xs: &[Var<T>]) -> Result<Var<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Shape("add_n of nothing".into()))?;
    for x in &xs[1..] {
        same_shape("add_n", first, x)?;
    }
    let mut out = first.value().clone();
    for x in &xs[1..] {
        out.add_assign(&x.value());
    }
    let n = xs.len();
    let refs: Vec<&Var<T>> = xs.iter().collect();
    Ok(Var::from_op(out, &refs, move |g| vec![Some(g.clone()); n]))
}

/// `a + b` where `b`'s shape equals the trailing dims of `a`.
pub fn add_broadcast<T: Real>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != sb[..] {
        return Err(Error::Shape(format!(
            "add_broadcast: {sb:?} is not a suffix of {sa:?}"
        )));
    }
    let inner = b.value().numel();
    let mut out = a.value().clone();
    {
        let bv = b.value();
        for chunk in out.data_mut().chunks_mut(inner) {
            for (o, &v) in chunk.iter_mut().zip(bv.data()) {
                *o += v;
            }
        }
    }
    Ok(Var::from_op(out, &[a, b], move |g| {
        let mut gb = Tensor::zeros(&sb);
        for chunk in g.data().chunks(inner) {
            for (o, &v) in gb.data_mut().iter_mut().zip(chunk) {
                *o += v;
            }
        }
        vec![Some(g.clone()), Some(gb)]
    }))
}

pub fn scale<T: Real>(a: &Var<T>, s: T) -> Var<T> {
    let out = a.value().map(|v| v * s);
    Var::from_op(out, &[a], move |g| vec![Some(g.map(|v| v * s))])
}

/// Rectifier; the subgradient at zero is zero.
pub fn relu<T: Real>(a: &Var<T>) -> Var<T> {
    let out = a.value().map(|v| if v > T::zero() { v } else { T::zero() });
    let mask: Vec<bool> = out.data().iter().map(|&v| v > T::zero()).collect();
    Var::from_op(out, &[a], move |g| {
        let mut gi = g.clone();
        for (v, &m) in gi.data_mut().iter_mut().zip(&mask) {
            if !m {
                *v = T::zero();
            }
        }
        vec![Some(gi)]
    })
}

pub fn sum<T: Real>(a: &Var<T>) -> Var<T> {
    let out = Tensor::scalar(a.value().sum());
    let shape = a.shape();
    Var::from_op(out, &[a], move |g| {
        vec![Some(Tensor::full(&shape, g.item()))]
    })
}

pub fn mean<T: Real>(a: &Var<T>) -> Var<T> {
    let n = T::lit(a.value().numel() as f64);
    scale(&sum(a), T::one() / n)
}

pub fn reshape<T: Real>(a: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    let in_shape = a.shape();
    let out = a.value().clone().reshaped(shape)?;
    Ok(Var::from_op(out, &[a], move |g| {
        vec![Some(
            g.clone().reshaped(&in_shape).expect("same element count"),
        )]
    }))
}

/// Collapses all but the first dimension.
pub fn flatten<T: Real>(a: &Var<T>) -> Result<Var<T>> {
    let s = a.shape();
    let n = s.first().copied().unwrap_or(1);
    let rest: usize = s.iter().skip(1).product();
    reshape(a, &[n, rest])
}

pub fn permute<T: Real>(a: &Var<T>, perm: &[usize]) -> Result<Var<T>> {
    let out = a.value().permuted(perm)?;
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    Ok(Var::from_op(out, &[a], move |g| {
        vec![Some(g.permuted(&inv).expect("inverse permutation"))]
    }))
}

/// Batched matrix product `a[B, m, k] x op(b)`, `op(b)` being `b[B, k, n]`
/// or, with `trans_b`, the transpose of `b[B, n, k]`.
pub fn bmm<T: Real>(a: &Var<T>, b: &Var<T>, trans_b: bool) -> Result<Var<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
        return Err(Error::Shape(format!("bmm: {sa:?} x {sb:?}")));
    }
    let (batch, m, k) = (sa[0], sa[1], sa[2]);
    let (kb, n) = if trans_b {
        (sb[2], sb[1])
    } else {
        (sb[1], sb[2])
    };
    if kb != k {
        return Err(Error::Shape(format!(
            "bmm: inner dims {k} vs {kb} (trans_b = {trans_b})"
        )));
    }
    let mut out = Tensor::zeros(&[batch, m, n]);
    {
        let (av, bv) = (a.value(), b.value());
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &av.data()[i * m * k..(i + 1) * m * k],
                false,
                &bv.data()[i * k * n..(i + 1) * k * n],
                trans_b,
                T::zero(),
                &mut out.data_mut()[i * m * n..(i + 1) * m * n],
            );
        }
    }
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Var::from_op(out, &[a, b], move |g| {
        let (av, bv) = (ac.value(), bc.value());
        let mut ga = Tensor::zeros(&sa);
        let mut gb = Tensor::zeros(&sb);
        for i in 0..batch {
            let gi = &g.data()[i * m * n..(i + 1) * m * n];
            let ai = &av.data()[i * m * k..(i + 1) * m * k];
            let bi = &bv.data()[i * k * n..(i + 1) * k * n];
            // dA = dC op(B)^T
            gemm(
                m,
                n,
                k,
                gi,
                false,
                bi,
                !trans_b,
                T::zero(),
                &mut ga.data_mut()[i * m * k..(i + 1) * m * k],
            );
            let gbi = &mut gb.data_mut()[i * k * n..(i + 1) * k * n];
            if trans_b {
                // C = A B^T  =>  dB = dC^T A   (n x k)
                gemm(n, m, k, gi, true, ai, false, T::zero(), gbi);
            } else {
                // dB = A^T dC   (k x n)
                gemm(k, m, n, ai, true, gi, false, T::zero(), gbi);
            }
        }
        vec![Some(ga), Some(gb)]
    }))
}

/// `x[..., d] W[d, e] + b[e]`.
pub fn linear<T: Real>(x: &Var<T>, w: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    let (sx, sw, sb) = (x.shape(), w.shape(), b.shape());
    let d = *sx
        .last()
        .ok_or_else(|| Error::Shape("linear on a scalar".into()))?;
    if sw.len() != 2 || sw[0] != d || sb != [sw[1]] {
        return Err(Error::Shape(format!(
            "linear: x {sx:?}, W {sw:?}, b {sb:?}"
        )));
    }
    let e = sw[1];
    let rows = x.value().numel() / d;
    let mut out_shape = sx.clone();
    *out_shape.last_mut().unwrap() = e;
    let mut out = Tensor::zeros(&out_shape);
    {
        let (xv, wv, bv) = (x.value(), w.value(), b.value());
        for row in out.data_mut().chunks_mut(e) {
            row.copy_from_slice(bv.data());
        }
        gemm(
            rows,
            d,
            e,
            xv.data(),
            false,
            wv.data(),
            false,
            T::one(),
            out.data_mut(),
        );
    }
    let (xc, wc) = (x.clone(), w.clone());
    Ok(Var::from_op(out, &[x, w, b], move |g| {
        let (xv, wv) = (xc.value(), wc.value());
        let mut gx = Tensor::zeros(&sx);
        gemm(
            rows,
            e,
            d,
            g.data(),
            false,
            wv.data(),
            true,
            T::zero(),
            gx.data_mut(),
        );
        let mut gw = Tensor::zeros(&sw);
        gemm(
            d,
            rows,
            e,
            xv.data(),
            true,
            g.data(),
            false,
            T::zero(),
            gw.data_mut(),
        );
        let mut gb = Tensor::zeros(&sb);
        for row in g.data().chunks(e) {
            for (o, &v) in gb.data_mut().iter_mut().zip(row) {
                *o += v;
            }
        }
        vec![Some(gx), Some(gw), Some(gb)]
    }))
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Real>(x: &Var<T>, axis: usize) -> Result<Var<T>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::Shape(format!(
            "softmax axis {axis} on rank {}",
            shape.len()
        )));
    }
    let (outer, len, inner) = axis_split(&shape, axis);
    let mut out = x.value().clone();
    {
        let d = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mx = (0..len).map(|j| d[at(j)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for j in 0..len {
                    let e = (d[at(j)] - mx).exp();
                    d[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    d[at(j)] /= total;
                }
            }
        }
    }
    let y = out.clone();
    Ok(Var::from_op(out, &[x], move |g| {
        let mut gx = Tensor::zeros(y.shape());
        let (yd, gd) = (y.data(), g.data());
        let gxd = gx.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let dot: T = (0..len).map(|j| yd[at(j)] * gd[at(j)]).sum();
                for j in 0..len {
                    gxd[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                }
            }
        }
        vec![Some(gx)]
    }))
}

/// Mean (or weighted mean) negative log-likelihood of `labels` under
/// `softmax(logits)`. With `weights`, sample `i` counts `weights[labels[i]]`
/// and the sum is divided by the total weight.
pub fn cross_entropy<T: Real>(
    logits: &Var<T>,
    labels: &[usize],
    weights: Option<&[T]>,
) -> Result<Var<T>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() || shape[0] == 0 {
        return Err(Error::Shape(format!(
            "cross_entropy: logits {shape:?} with {} labels",
            labels.len()
        )));
    }
    let (n, c) = (shape[0], shape[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Contract(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    if let Some(w) = weights {
        if w.len() != c {
            return Err(Error::Shape(format!(
                "{} class weights for {c} classes",
                w.len()
            )));
        }
    }
    let sample_w: Vec<T> = labels
        .iter()
        .map(|&l| weights.map_or(T::one(), |w| w[l]))
        .collect();
    let total_w: T = sample_w.iter().copied().sum();
    let mut probs = vec![T::zero(); n * c];
    let mut loss = T::zero();
    {
        let z = logits.value();
        for i in 0..n {
            let row = &z.data()[i * c..(i + 1) * c];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss += sample_w[i] * (lse - row[labels[i]]);
        }
    }
    let labels = labels.to_vec();
    Ok(Var::from_op(
        Tensor::scalar(loss / total_w),
        &[logits],
        move |g| {
            let scale = g.item() / total_w;
            let mut gz = Tensor::zeros(&[n, c]);
            for i in 0..n {
                for j in 0..c {
                    let onehot = if j == labels[i] { T::one() } else { T::zero() };
                    gz.data_mut()[i * c + j] = scale * sample_w[i] * (probs[i * c + j] - onehot);
                }
            }
            vec![Some(gz)]
        },
    ))
}

/// Gathers channels `index` of `x[N, C, H, W]` into `[N, index.len(), H, W]`.
pub fn select_channels<T: Real>(x: &Var<T>, index: &[usize]) -> Result<Var<T>> {
    let s = x.shape();
    if s.len() != 4 || index.iter().any(|&i| i >= s[1]) {
        return Err(Error::Shape(format!(
            "select_channels {index:?} from {s:?}"
        )));
    }
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let k = index.len();
    let mut out = Tensor::zeros(&[n, k, s[2], s[3]]);
    {
        let xv = x.value();
        for b in 0..n {
            for (j, &ci) in index.iter().enumerate() {
                let src = &xv.data()[(b * c + ci) * hw..(b * c + ci + 1) * hw];
                out.data_mut()[(b * k + j) * hw..(b * k + j + 1) * hw].copy_from_slice(src);
            }
        }
    }
    let index = index.to_vec();
    Ok(Var::from_op(out, &[x], move |g| {
        let mut gx = Tensor::zeros(&s);
        for b in 0..n {
            for (j, &ci) in index.iter().enumerate() {
                let src = &g.data()[(b * k + j) * hw..(b * k + j + 1) * hw];
                for (o, &v) in gx.data_mut()[(b * c + ci) * hw..(b * c + ci + 1) * hw]
                    .iter_mut()
                    .zip(src)
                {
                    *o += v;
                }
            }
        }
        vec![Some(gx)]
    }))
}

/// Prepends `token[d]` to every sequence of `x[N, T, d]`.
pub fn prepend_token<T: Real>(x: &Var<T>, token: &Var<T>) -> Result<Var<T>> {
    let (s, st) = (x.shape(), token.shape());
    if s.len() != 3 || st != [s[2]] {
        return Err(Error::Shape(format!(
            "prepend_token: x {s:?}, token {st:?}"
        )));
    }
    let (n, t, d) = (s[0], s[1], s[2]);
    let mut out = Tensor::zeros(&[n, t + 1, d]);
    {
        let (xv, tv) = (x.value(), token.value());
        for b in 0..n {
            let dst = &mut out.data_mut()[b * (t + 1) * d..(b + 1) * (t + 1) * d];
            dst[..d].copy_from_slice(tv.data());
            dst[d..].copy_from_slice(&xv.data()[b * t * d..(b + 1) * t * d]);
        }
    }
    Ok(Var::from_op(out, &[x, token], move |g| {
        let mut gx = Tensor::zeros(&[n, t, d]);
        let mut gt = Tensor::zeros(&[d]);
        for b in 0..n {
            let src = &g.data()[b * (t + 1) * d..(b + 1) * (t + 1) * d];
            for (o, &v) in gt.data_mut().iter_mut().zip(&src[..d]) {
                *o += v;
            }
            gx.data_mut()[b * t * d..(b + 1) * t * d].copy_from_slice(&src[d..]);
        }
        vec![Some(gx), Some(gt)]
    }))
}

/// Token `index` of every sequence in `x[N, T, d]`, as `[N, d]`.
pub fn select_token<T: Real>(x: &Var<T>, index: usize) -> Result<Var<T>> {
    let s = x.shape();
    if s.len() != 3 || index >= s[1] {
        return Err(Error::Shape(format!("select_token {index} from {s:?}")));
    }
    let (n, t, d) = (s[0], s[1], s[2]);
    let mut out = Tensor::zeros(&[n, d]);
    {
        let xv = x.value();
        for b in 0..n {
            let at = (b * t + index) * d;
            out.data_mut()[b * d..(b + 1) * d].copy_from_slice(&xv.data()[at..at + d]);
        }
    }
    Ok(Var::from_op(out, &[x], move |g| {
        let mut gx = Tensor::zeros(&s);
        for b in 0..n {
            let at = (b * t + index) * d;
            gx.data_mut()[at..at + d].copy_from_slice(&g.data()[b * d..(b + 1) * d]);
        }
        vec![Some(gx)]
    }))
}

/// Source offset in `[N, C, H, W]` for each element of the patch layout
/// `[N, P, C * p * p]`, patches in row-major grid order, each flattened as
/// `(C, py, px)`.
fn patch_gather_index(shape: &[usize], p: usize) -> Vec<usize> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (gh, gw) = (h / p, w / p);
    let st = strides(shape);
    let mut idx = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for py in 0..gh {
            for px in 0..gw {
                for ch in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            idx.push(b * st[0] + ch * st[1] + (py * p + dy) * st[2] + px * p + dx);
                        }
                    }
                }
            }
        }
    }
    idx
}

fn check_patchable(shape: &[usize], p: usize) -> Result<()> {
    if shape.len() != 4 || p == 0 || shape[2] % p != 0 || shape[3] % p != 0 {
        return Err(Error::Shape(format!(
            "cannot cut {shape:?} into {p}x{p} patches"
        )));
    }
    Ok(())
}

/// `[N, C, H, W]` to non-overlapping patch tokens `[N, (H/p)(W/p), C p p]`.
pub fn patchify_tensor<T: Real>(x: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    check_patchable(x.shape(), p)?;
    let s = x.shape();
    let idx = patch_gather_index(s, p);
    let data = idx.iter().map(|&i| x.data()[i]).collect();
    Tensor::from_vec(&[s[0], (s[2] / p) * (s[3] / p), s[1] * p * p], data)
}

/// Inverse of [`patchify_tensor`] for an image of shape `[N, C, H, W]`.
pub fn unpatchify_tensor<T: Real>(
    tokens: &Tensor<T>,
    image_shape: &[usize],
    p: usize,
) -> Result<Tensor<T>> {
    check_patchable(image_shape, p)?;
    if tokens.numel() != image_shape.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "{:?} tokens do not tile {image_shape:?}",
            tokens.shape()
        )));
    }
    let idx = patch_gather_index(image_shape, p);
    let mut out = Tensor::zeros(image_shape);
    for (k, &i) in idx.iter().enumerate() {
        out.data_mut()[i] = tokens.data()[k];
    }
    Ok(out)
}

pub fn patchify<T: Real>(x: &Var<T>, p: usize) -> Result<Var<T>> {
    let shape = x.shape();
    let out = patchify_tensor(&x.value(), p)?;
    Ok(Var::from_op(out, &[x], move |g| {
        vec![Some(unpatchify_tensor(g, &shape, p).expect("patch layout"))]
    }))
}
