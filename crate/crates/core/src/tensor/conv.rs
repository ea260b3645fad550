//! 2-D convolution (cross-correlation, zero "same" padding, stride 1) and
//! 2x2 max pooling. Batches are processed one sample per rayon task.

use rayon::prelude::*;

use super::real::gemm;
use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn hw(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one `[Cin, H, W]` sample into `[Cin*kh*kw, H*W]`.
fn im2col<T: Real>(x: &[T], g: ConvGeom, col: &mut [T]) {
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let hw = g.hw();
    for c in 0..g.cin {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                for y in 0..g.h {
                    let sy = y as isize + ky as isize - ph as isize;
                    let line = &mut dst[y * g.w..(y + 1) * g.w];
                    if sy < 0 || sy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * g.w..(sy as usize + 1) * g.w];
                    for (x, o) in line.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - pw as isize;
                        *o = if sx < 0 || sx >= g.w as isize {
                            T::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds `col` back into `dx`.
fn col2im<T: Real>(col: &[T], g: ConvGeom, dx: &mut [T]) {
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let hw = g.hw();
    for c in 0..g.cin {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * hw..(row + 1) * hw];
                for y in 0..g.h {
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= g.h as isize {
                        continue;
                    }
                    for x in 0..g.w {
                        let sx = x as isize + kx as isize - pw as isize;
                        if sx >= 0 && sx < g.w as isize {
                            plane[sy as usize * g.w + sx as usize] += src[y * g.w + x];
                        }
                    }
                }
            }
        }
    }
}

/// `x[N, Cin, H, W] * w[Cout, Cin, kh, kw] + b[Cout]`, output `[N, Cout, H, W]`.
pub fn conv2d<T: Real>(x: &Var<T>, w: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    let (sx, sw, sb) = (x.shape(), w.shape(), b.shape());
    if sx.len() != 4 || sw.len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d: input {sx:?}, kernel {sw:?} (both must be rank 4)"
        )));
    }
    let (n, cin, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
    let (cout, kcin, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
    if kcin != cin {
        return Err(Error::Shape(format!(
            "conv2d: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    if sb != [cout] {
        return Err(Error::Shape(format!(
            "conv2d: bias {sb:?} for {cout} output channels"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Shape(format!(
            "conv2d: same padding needs odd kernel, got {kh}x{kw}"
        )));
    }
    let g = ConvGeom {
        cin,
        h,
        w: wd,
        kh,
        kw,
    };
    let (hw, rows) = (g.hw(), g.col_rows());
    let in_stride = cin * hw;
    let out_stride = cout * hw;
    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    {
        let (xv, wv, bv) = (x.value(), w.value(), b.value());
        let (xd, wdta, bd) = (xv.data(), wv.data(), bv.data());
        out.data_mut()
            .par_chunks_mut(out_stride)
            .enumerate()
            .for_each_init(
                || vec![T::zero(); rows * hw],
                |col, (i, o)| {
                    im2col(&xd[i * in_stride..(i + 1) * in_stride], g, col);
                    for (c, plane) in o.chunks_mut(hw).enumerate() {
                        plane.fill(bd[c]);
                    }
                    gemm(cout, rows, hw, wdta, false, col, false, T::one(), o);
                },
            );
    }
    let (xc, wc) = (x.clone(), w.clone());
    let need_x = x.requires_grad();
    let need_w = w.requires_grad();
    Ok(Var::from_op(out, &[x, w, b], move |grad| {
        let (xv, wv) = (xc.value(), wc.value());
        let (xd, wdta, gd) = (xv.data(), wv.data(), grad.data());
        let mut gx = Tensor::zeros(&sx);
        let per_sample: Vec<Vec<T>> = gx
            .data_mut()
            .par_chunks_mut(in_stride)
            .enumerate()
            .map_init(
                || vec![T::zero(); rows * hw],
                |col, (i, dx)| {
                    let gi = &gd[i * out_stride..(i + 1) * out_stride];
                    let mut dw = Vec::new();
                    if need_w {
                        im2col(&xd[i * in_stride..(i + 1) * in_stride], g, col);
                        dw = vec![T::zero(); cout * rows];
                        gemm(cout, hw, rows, gi, false, col, true, T::zero(), &mut dw);
                    }
                    if need_x {
                        gemm(rows, cout, hw, wdta, true, gi, false, T::zero(), col);
                        col2im(col, g, dx);
                    }
                    dw
                },
            )
            .collect();
        let mut gw = Tensor::zeros(&sw);
        if need_w {
            for dw in &per_sample {
                for (a, &v) in gw.data_mut().iter_mut().zip(dw) {
                    *a += v;
                }
            }
        }
        let mut gb = Tensor::zeros(&sb);
        for sample in gd.chunks(out_stride) {
            for (c, plane) in sample.chunks(hw).enumerate() {
                gb.data_mut()[c] += plane.iter().copied().sum::<T>();
            }
        }
        vec![need_x.then_some(gx), need_w.then_some(gw), Some(gb)]
    }))
}

/// `sum_j relu(conv2d(x_j, w[j], b[j]))` where `x_j` gathers channels
/// `c * G + j` (c = 0..C) of `x[N, C * G, H, W]` and `G = w.len()`.
/// Equal to composing `select_channels`, `conv2d`, `relu` and `add_n`, but
/// processed one sample at a time without materializing per-group outputs;
/// the backward pass recomputes the pre-activations.
pub fn grouped_relu_sum<T: Real>(x: &Var<T>, w: &[Var<T>], b: &[Var<T>]) -> Result<Var<T>> {
    let sx = x.shape();
    let groups = w.len();
    if groups == 0 || b.len() != groups {
        return Err(Error::Shape(format!(
            "grouped_relu_sum: {} kernels, {} biases",
            groups,
            b.len()
        )));
    }
    if sx.len() != 4 || sx[1] % groups != 0 {
        return Err(Error::Shape(format!(
            "grouped_relu_sum: input {sx:?} for {groups} groups"
        )));
    }
    let (n, c, h, wd) = (sx[0], sx[1] / groups, sx[2], sx[3]);
    let sw = w[0].shape();
    if sw.len() != 4 || sw[1] != c || sw[2] % 2 == 0 || sw[3] % 2 == 0 {
        return Err(Error::Shape(format!(
            "grouped_relu_sum: kernel {sw:?} for {c} channels per group"
        )));
    }
    for (wi, bi) in w.iter().zip(b) {
        if wi.shape() != sw || bi.shape() != [sw[0]] {
            return Err(Error::Shape(format!(
                "grouped_relu_sum: kernels {:?} / bias {:?} differ from {sw:?}",
                wi.shape(),
                bi.shape()
            )));
        }
    }
    let cout = sw[0];
    let g = ConvGeom {
        cin: c,
        h,
        w: wd,
        kh: sw[2],
        kw: sw[3],
    };
    let (hw, rows) = (g.hw(), g.col_rows());
    let in_stride = c * groups * hw;
    let out_stride = cout * hw;

    // gathers group j of one sample into [C, H, W]
    let gather = move |xs: &[T], j: usize, dst: &mut [T]| {
        for ch in 0..c {
            let src = (ch * groups + j) * hw;
            dst[ch * hw..(ch + 1) * hw].copy_from_slice(&xs[src..src + hw]);
        }
    };
    // bias-filled pre-activation of group j
    let preact = move |wd: &[T], bd: &[T], col: &[T], pre: &mut [T]| {
        for (ch, plane) in pre.chunks_mut(hw).enumerate() {
            plane.fill(bd[ch]);
        }
        gemm(cout, rows, hw, wd, false, col, false, T::one(), pre);
    };

    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    {
        let xv = x.value();
        let wv: Vec<_> = w.iter().map(|v| v.value()).collect();
        let bv: Vec<_> = b.iter().map(|v| v.value()).collect();
        let (wv, bv): (Vec<&[T]>, Vec<&[T]>) = (
            wv.iter().map(|r| r.data()).collect(),
            bv.iter().map(|r| r.data()).collect(),
        );
        let xd = xv.data();
        out.data_mut()
            .par_chunks_mut(out_stride)
            .enumerate()
            .for_each_init(
                || {
                    (
                        vec![T::zero(); c * hw],
                        vec![T::zero(); rows * hw],
                        vec![T::zero(); out_stride],
                    )
                },
                |(plane, col, pre), (i, o)| {
                    let xs = &xd[i * in_stride..(i + 1) * in_stride];
                    for j in 0..groups {
                        gather(xs, j, plane);
                        im2col(plane, g, col);
                        preact(wv[j], bv[j], col, pre);
                        if j == 0 {
                            for (a, &p) in o.iter_mut().zip(pre.iter()) {
                                *a = p.max(T::zero());
                            }
                        } else {
                            for (a, &p) in o.iter_mut().zip(pre.iter()) {
                                *a += p.max(T::zero());
                            }
                        }
                    }
                },
            );
    }

    let xc = x.clone();
    let (wc, bc) = (w.to_vec(), b.to_vec());
    let need_x = x.requires_grad();
    let parents: Vec<&Var<T>> = std::iter::once(x).chain(w).chain(b).collect();
    Ok(Var::from_op(out, &parents, move |grad| {
        let xv = xc.value();
        let wv: Vec<_> = wc.iter().map(|v| v.value()).collect();
        let bv: Vec<_> = bc.iter().map(|v| v.value()).collect();
        let (wv, bv): (Vec<&[T]>, Vec<&[T]>) = (
            wv.iter().map(|r| r.data()).collect(),
            bv.iter().map(|r| r.data()).collect(),
        );
        let (xd, gd) = (xv.data(), grad.data());
        let wlen = cout * rows;
        let mut gx = Tensor::zeros(&sx);
        // per sample: groups * (dW, db)
        let partials: Vec<Vec<T>> = gx
            .data_mut()
            .par_chunks_mut(in_stride)
            .enumerate()
            .map_init(
                || {
                    (
                        vec![T::zero(); c * hw],
                        vec![T::zero(); rows * hw],
                        vec![T::zero(); out_stride],
                    )
                },
                |(plane, col, pre), (i, dx)| {
                    let xs = &xd[i * in_stride..(i + 1) * in_stride];
                    let gi = &gd[i * out_stride..(i + 1) * out_stride];
                    let mut acc = vec![T::zero(); groups * (wlen + cout)];
                    for j in 0..groups {
                        gather(xs, j, plane);
                        im2col(plane, g, col);
                        preact(wv[j], bv[j], col, pre);
                        for (p, &gv) in pre.iter_mut().zip(gi) {
                            *p = if *p > T::zero() { gv } else { T::zero() };
                        }
                        let (dw, db) =
                            acc[j * (wlen + cout)..(j + 1) * (wlen + cout)].split_at_mut(wlen);
                        gemm(cout, hw, rows, pre, false, col, true, T::zero(), dw);
                        for (d, p) in db.iter_mut().zip(pre.chunks(hw)) {
                            *d = p.iter().copied().sum::<T>();
                        }
                        if need_x {
                            gemm(rows, cout, hw, wv[j], true, pre, false, T::zero(), col);
                            plane.fill(T::zero());
                            col2im(col, g, plane);
                            for ch in 0..c {
                                let dst = (ch * groups + j) * hw;
                                for (d, &v) in dx[dst..dst + hw]
                                    .iter_mut()
                                    .zip(&plane[ch * hw..(ch + 1) * hw])
                                {
                                    *d += v;
                                }
                            }
                        }
                    }
                    acc
                },
            )
            .collect();
        let mut gw: Vec<Tensor<T>> = (0..groups).map(|_| Tensor::zeros(&sw)).collect();
        let mut gb: Vec<Tensor<T>> = (0..groups).map(|_| Tensor::zeros(&[cout])).collect();
        for acc in &partials {
            for j in 0..groups {
                let part = &acc[j * (wlen + cout)..(j + 1) * (wlen + cout)];
                for (a, &v) in gw[j].data_mut().iter_mut().zip(&part[..wlen]) {
                    *a += v;
                }
                for (a, &v) in gb[j].data_mut().iter_mut().zip(&part[wlen..]) {
                    *a += v;
                }
            }
        }
        let mut grads = Vec::with_capacity(1 + 2 * groups);
        grads.push(need_x.then_some(gx));
        grads.extend(gw.into_iter().map(Some));
        grads.extend(gb.into_iter().map(Some));
        grads
    }))
}

/// 2x2 max pooling with stride 2 in ceil mode: `[N, C, H, W]` to
/// `[N, C, ceil(H/2), ceil(W/2)]`. The gradient goes to the first maximal
/// element of each window in row-major order.
pub fn max_pool2d<T: Real>(x: &Var<T>) -> Result<Var<T>> {
    let s = x.shape();
    if s.len() != 4 || s[2] == 0 || s[3] == 0 {
        return Err(Error::Shape(format!(
            "max_pool2d needs [N, C, H, W] with H, W >= 1, got {s:?}"
        )));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    {
        let xv = x.value();
        let xd = xv.data();
        let od = out.data_mut();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for y in 2 * oy..(2 * oy + 2).min(h) {
                        for xx in 2 * ox..(2 * ox + 2).min(w) {
                            let at = base + y * w + xx;
                            if xd[at] > xd[best] {
                                best = at;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    od[o] = xd[best];
                    argmax[o] = best;
                }
            }
        }
    }
    Ok(Var::from_op(out, &[x], move |g| {
        let mut gx = Tensor::zeros(&s);
        for (o, &src) in argmax.iter().enumerate() {
            gx.data_mut()[src] += g.data()[o];
        }
        vec![Some(gx)]
    }))
}
