#![allow(dead_code)]

pub mod grads;

use qv_core::audio::Label;

/// Brute-force shift-subtract maps for a `[N, C, H, W]` image given as
/// nested vectors, laid out `[n][c * 8 + j][y][x]`.
pub fn basis_oracle(img: &[Vec<Vec<Vec<f64>>>]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let shifts = [-1i64, 1, -2, 2];
    let mut out = Vec::new();
    for sample in img {
        let mut maps = Vec::new();
        for plane in sample {
            let h = plane.len() as i64;
            let w = plane[0].len() as i64;
            for axis in 0..2 {
                for &m in &shifts {
                    let mut map = vec![vec![0.0; w as usize]; h as usize];
                    for y in 0..h {
                        for x in 0..w {
                            let (sy, sx) = if axis == 0 { (y, x - m) } else { (y - m, x) };
                            let sy = sy.clamp(0, h - 1) as usize;
                            let sx = sx.clamp(0, w - 1) as usize;
                            map[y as usize][x as usize] =
                                plane[sy][sx] - plane[y as usize][x as usize];
                        }
                    }
                    maps.push(map);
                }
            }
        }
        out.push(maps);
    }
    out
}

fn rates(scores: &[f64], labels: &[Label], t: f64) -> (f64, f64) {
    let mut spoof_acc = 0usize;
    let mut spoof = 0usize;
    let mut bona_rej = 0usize;
    let mut bona = 0usize;
    for (s, l) in scores.iter().zip(labels) {
        match l {
            Label::Spoof => {
                spoof += 1;
                if *s >= t {
                    spoof_acc += 1;
                }
            }
            Label::Bonafide => {
                bona += 1;
                if *s < t {
                    bona_rej += 1;
                }
            }
        }
    }
    (
        spoof_acc as f64 / spoof as f64,
        bona_rej as f64 / bona as f64,
    )
}

/// Exhaustive-sweep EER: FAR/FRR counted directly at every distinct score
/// and above the maximum, then the tie-or-crossing rule.
pub fn eer_oracle(scores: &[f64], labels: &[Label]) -> f64 {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut pts: Vec<(f64, f64)> = ts.iter().map(|&t| rates(scores, labels, t)).collect();
    pts.push(rates(scores, labels, f64::INFINITY));
    let last = pts.len() - 1;
    let d: Vec<f64> = pts.iter().map(|p| p.0 - p.1).collect();
    let mut best = f64::INFINITY;
    let mut tie = false;
    for k in 1..last {
        if d[k] == 0.0 {
            best = best.min(pts[k].0);
            tie = true;
        }
    }
    let pos = (1..last).filter(|&k| d[k] > 0.0).max();
    let neg = (1..last).filter(|&k| d[k] < 0.0).min();
    let pair = match (pos, neg) {
        (Some(p), Some(n)) => Some((p, n)),
        _ if tie => None,
        (p, n) => Some((p.unwrap_or(0), n.unwrap_or(last))),
    };
    if let Some((p, n)) = pair {
        let alpha = d[p] / (d[p] - d[n]);
        best = best.min(pts[p].0 + alpha * (pts[n].0 - pts[p].0));
    }
    best
}

/// Magnitude of the one-sided DFT of `frame`, by direct summation.
pub fn naive_dft_mag(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in frame.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Zero-padded "same" convolution by nested loops.
pub fn conv_oracle(x: &[f64], xs: [usize; 4], w: &[f64], ws: [usize; 4], b: &[f64]) -> Vec<f64> {
    let [n, cin, h, wd] = xs;
    let [cout, _, kh, kw] = ws;
    let (ph, pw) = (kh as i64 / 2, kw as i64 / 2);
    let mut out = vec![0.0; n * cout * h * wd];
    for bi in 0..n {
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let sy = y as i64 + ky as i64 - ph;
                                let sx = xx as i64 + kx as i64 - pw;
                                if sy < 0 || sx < 0 || sy >= h as i64 || sx >= wd as i64 {
                                    continue;
                                }
                                acc += x[((bi * cin + ci) * h + sy as usize) * wd + sx as usize]
                                    * w[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((bi * cout + co) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    out
}
