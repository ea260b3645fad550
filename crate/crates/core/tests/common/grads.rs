use qv_core::qv::{basis_waves, QVConfig, QvBlock};
use qv_core::tensor::gradcheck::{check, random_tensor, DEFAULT_STEP};
use qv_core::tensor::nn::{MultiHeadAttention, Param};
use qv_core::tensor::ops::{self, BatchNormStats};
use qv_core::tensor::{Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn leaf(shape: &[usize], r: &mut ChaCha8Rng) -> Var<f64> {
    Var::leaf(random_tensor(shape, -1.0, 1.0, r))
}

/// Values bounded away from zero by `gap`.
fn away_from_zero(shape: &[usize], gap: f64, r: &mut ChaCha8Rng) -> Var<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.random_range(gap..1.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Var::leaf(Tensor::from_vec(shape, data).unwrap())
}

/// Distinct values spaced 0.01 apart, shuffled, so no pooling window is near a tie.
fn distinct(shape: &[usize], r: &mut ChaCha8Rng) -> Var<f64> {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.3).collect();
    data.shuffle(r);
    Var::leaf(Tensor::from_vec(shape, data).unwrap())
}

fn vars(params: &[Param<f64>]) -> Vec<Var<f64>> {
    params.iter().map(|p| p.var.clone()).collect()
}

pub fn conv2d() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, (xs, ws)) in [
        ([1, 1, 5, 5], [2, 1, 3, 3]),
        ([2, 3, 4, 6], [4, 3, 3, 3]),
        ([3, 2, 6, 5], [1, 2, 1, 1]),
    ]
    .into_iter()
    .enumerate()
    {
        let mut r = rng(i as u64);
        let x = leaf(&xs, &mut r);
        let w = leaf(&ws, &mut r);
        let b = leaf(&[ws[0]], &mut r);
        let err = check(
            &[x.clone(), w.clone(), b.clone()],
            || ops::conv2d(&x, &w, &b),
            DEFAULT_STEP,
            1,
        )
        .unwrap();
        out.push((format!("conv2d {xs:?} {ws:?}"), err));
    }
    out
}

pub fn batch_norm() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, s) in [[2, 3, 4, 4], [4, 1, 3, 5], [3, 5, 2, 2]]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(10 + i as u64);
        let x = Var::leaf(random_tensor(&s, -3.0, 3.0, &mut r));
        let g = Var::leaf(random_tensor(&[s[1]], 0.5, 1.5, &mut r));
        let b = leaf(&[s[1]], &mut r);
        let stats = BatchNormStats::new(s[1]);
        for train in [true, false] {
            let err = check(
                &[x.clone(), g.clone(), b.clone()],
                || ops::batch_norm(&x, &g, &b, &stats, train),
                DEFAULT_STEP,
                2,
            )
            .unwrap();
            out.push((format!("batch_norm {s:?} train={train}"), err));
        }
    }
    out
}

pub fn max_pool() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, s) in [[1, 1, 4, 4], [2, 3, 5, 6], [2, 2, 3, 3]]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(20 + i as u64);
        let x = distinct(&s, &mut r);
        let err = check(&[x.clone()], || ops::max_pool2d(&x), DEFAULT_STEP, 3).unwrap();
        out.push((format!("max_pool2d {s:?}"), err));
    }
    out
}

pub fn relu() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, s) in [vec![7], vec![3, 4], vec![2, 3, 4, 5]]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(30 + i as u64);
        let x = away_from_zero(&s, 0.01, &mut r);
        let err = check(&[x.clone()], || Ok(ops::relu(&x)), DEFAULT_STEP, 4).unwrap();
        out.push((format!("relu {s:?}"), err));
    }
    out
}

pub fn linear() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, (xs, d_out)) in [(vec![3, 4], 2), (vec![2, 5, 6], 3), (vec![1, 1], 5)]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(40 + i as u64);
        let d_in = *xs.last().unwrap();
        let x = leaf(&xs, &mut r);
        let w = leaf(&[d_in, d_out], &mut r);
        let b = leaf(&[d_out], &mut r);
        let err = check(
            &[x.clone(), w.clone(), b.clone()],
            || ops::linear(&x, &w, &b),
            DEFAULT_STEP,
            5,
        )
        .unwrap();
        out.push((format!("linear {xs:?} -> {d_out}"), err));
    }
    out
}

pub fn layer_norm() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, s) in [vec![2, 5], vec![3, 2, 8], vec![1, 4, 3]]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(50 + i as u64);
        let d = *s.last().unwrap();
        let x = leaf(&s, &mut r);
        let g = Var::leaf(random_tensor(&[d], 0.5, 1.5, &mut r));
        let b = leaf(&[d], &mut r);
        let err = check(
            &[x.clone(), g.clone(), b.clone()],
            || ops::layer_norm(&x, &g, &b),
            DEFAULT_STEP,
            6,
        )
        .unwrap();
        out.push((format!("layer_norm {s:?}"), err));
    }
    out
}

pub fn attention() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, (n, t, d, h)) in [(1, 3, 4, 1), (2, 4, 6, 2), (2, 2, 8, 4)]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(60 + i as u64);
        let att = MultiHeadAttention::<f64>::new("att", d, h, &mut r).unwrap();
        let x = leaf(&[n, t, d], &mut r);
        let mut params = Vec::new();
        att.params(&mut params);
        let mut wrt = vars(&params);
        wrt.push(x.clone());
        let err = check(&wrt, || att.forward(&x), DEFAULT_STEP, 7).unwrap();
        out.push((format!("attention n={n} t={t} d={d} h={h}"), err));
    }
    out
}

pub fn softmax() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, (s, axis)) in [(vec![3, 4], 1), (vec![2, 3, 5], 1), (vec![4, 2], 0)]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(70 + i as u64);
        let x = leaf(&s, &mut r);
        let err = check(&[x.clone()], || ops::softmax(&x, axis), DEFAULT_STEP, 8).unwrap();
        out.push((format!("softmax {s:?} axis {axis}"), err));
    }
    out
}

pub fn cross_entropy() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, n) in [1usize, 4, 9].into_iter().enumerate() {
        let mut r = rng(80 + i as u64);
        let logits = leaf(&[n, 2], &mut r);
        let labels: Vec<usize> = (0..n).map(|k| k % 2).collect();
        let weights = [0.7, 1.9];
        for w in [None, Some(&weights[..])] {
            let err = check(
                &[logits.clone()],
                || ops::cross_entropy(&logits, &labels, w),
                DEFAULT_STEP,
                9,
            )
            .unwrap();
            out.push((format!("cross_entropy n={n} weighted={}", w.is_some()), err));
        }
    }
    out
}

pub fn plumbing() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, s) in [[2, 3, 4], [1, 2, 2], [3, 2, 5]].into_iter().enumerate() {
        let mut r = rng(90 + i as u64);
        let x = leaf(&s, &mut r);
        let y = leaf(&s, &mut r);
        let bias = leaf(&[s[2]], &mut r);
        let tok = leaf(&[s[2]], &mut r);
        let cases: Vec<(&str, Box<dyn Fn() -> qv_core::Result<Var<f64>>>)> = vec![
            ("add", Box::new(|| ops::add(&x, &y))),
            ("sub", Box::new(|| ops::sub(&x, &y))),
            ("mul", Box::new(|| ops::mul(&x, &y))),
            (
                "add_n",
                Box::new(|| ops::add_n(&[x.clone(), y.clone(), x.clone()])),
            ),
            ("add_broadcast", Box::new(|| ops::add_broadcast(&x, &bias))),
            ("permute", Box::new(|| ops::permute(&x, &[2, 0, 1]))),
            ("bmm", Box::new(|| ops::bmm(&x, &y, true))),
            ("prepend_token", Box::new(|| ops::prepend_token(&x, &tok))),
            ("select_token", Box::new(|| ops::select_token(&x, 1))),
            ("mean", Box::new(|| Ok(ops::mean(&x)))),
        ];
        for (name, f) in cases {
            let err = check(
                &[x.clone(), y.clone(), bias.clone(), tok.clone()],
                f,
                DEFAULT_STEP,
                10,
            )
            .unwrap();
            out.push((format!("{name} {s:?}"), err));
        }
    }
    out
}

pub fn patchify() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, (s, p)) in [([2, 2, 8, 8], 4), ([1, 1, 4, 4], 2), ([1, 3, 6, 9], 3)]
        .into_iter()
        .enumerate()
    {
        let mut r = rng(95 + i as u64);
        let x = leaf(&s, &mut r);
        let err = check(&[x.clone()], || ops::patchify(&x, p), DEFAULT_STEP, 11).unwrap();
        out.push((format!("patchify {s:?} patch {p}"), err));
    }
    out
}

/// Sign pattern of every ReLU input in every branch.
fn relu_mask(block: &QvBlock<f64>, x: &Var<f64>) -> Vec<bool> {
    let basis = basis_waves(x).unwrap();
    let c = basis.channels();
    let mut mask = Vec::new();
    for (j, branch) in block.branches.iter().enumerate() {
        let idx: Vec<usize> = (0..c).map(|ch| ch * 8 + j).collect();
        let mut h = ops::select_channels(&basis.maps, &idx).unwrap();
        for layer in &branch.layers {
            let z = layer.forward(&h).unwrap();
            mask.extend(z.value().data().iter().map(|&v| v > 0.0));
            h = ops::relu(&z);
        }
    }
    mask
}

/// True when some +-h probe of some coordinate flips a ReLU, i.e. the
/// finite difference would straddle a kink.
fn probes_cross_kink(block: &QvBlock<f64>, x: &Var<f64>, wrt: &[Var<f64>]) -> bool {
    let base = relu_mask(block, x);
    for v in wrt {
        let n = v.value().numel();
        for i in 0..n {
            let orig = v.value().data()[i];
            for step in [DEFAULT_STEP, -DEFAULT_STEP] {
                v.value_mut().data_mut()[i] = orig + step;
                let flipped = relu_mask(block, x) != base;
                v.value_mut().data_mut()[i] = orig;
                if flipped {
                    return true;
                }
            }
        }
    }
    false
}

fn qv_check(depth: usize, shapes: &[[usize; 4]]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, s) in shapes.iter().enumerate() {
        let cfg = QVConfig {
            filters: 2,
            depth,
            in_channels: s[1],
            ..QVConfig::default()
        };
        let instance = (0..100u64).find_map(|k| {
            let mut r = rng(1000 * depth as u64 + 100 * i as u64 + k);
            let block = QvBlock::<f64>::new("qv", cfg.clone(), &mut r).unwrap();
            // wide inputs and weights make kinks rare relative to the probe size
            let x = Var::leaf(random_tensor(s, -20.0, 20.0, &mut r));
            let mut params = Vec::new();
            block.params(&mut params);
            for p in params.iter().filter(|p| p.name.ends_with(".weight")) {
                p.var
                    .value_mut()
                    .data_mut()
                    .iter_mut()
                    .for_each(|w| *w *= 20.0);
            }
            let mut wrt = vars(&params);
            wrt.push(x.clone());
            (!probes_cross_kink(&block, &x, &wrt)).then_some((block, x, params.len(), wrt))
        });
        let (block, x, n_params, wrt) =
            instance.expect("an instance whose probes avoid every kink");
        assert_eq!(n_params, 2 * 8 * depth);
        let err = check(&wrt, || block.forward(&x), DEFAULT_STEP, 12).unwrap();
        out.push((format!("qv depth {depth} input {s:?}"), err));
    }
    out
}

pub fn qv_depth_one() -> Vec<(String, f64)> {
    qv_check(1, &[[1, 1, 5, 5], [2, 1, 6, 7], [1, 2, 5, 6]])
}

pub fn qv_depth_three() -> Vec<(String, f64)> {
    qv_check(3, &[[1, 1, 5, 5], [1, 2, 5, 5], [2, 1, 6, 5]])
}

pub const SUITE: &[(&str, fn() -> Vec<(String, f64)>)] = &[
    ("conv2d", conv2d),
    ("batch_norm", batch_norm),
    ("max_pool", max_pool),
    ("relu", relu),
    ("linear", linear),
    ("layer_norm", layer_norm),
    ("attention", attention),
    ("softmax", softmax),
    ("cross_entropy", cross_entropy),
    ("plumbing", plumbing),
    ("patchify", patchify),
    ("qv_depth_one", qv_depth_one),
    ("qv_depth_three", qv_depth_three),
];
