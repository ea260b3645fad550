//! Central finite-difference gradient checking in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ops, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Relative error with a small absolute floor so that near-zero gradients
/// compare on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Random tensor with entries uniform in `[lo, hi)`.
pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .expect("shape product")
}

/// Compares the analytic gradient of `sum(r * f())` with respect to every
/// leaf in `wrt` against central differences with step `h`. `r` is a fixed
/// random projection so every output element contributes. Returns the
/// maximum relative error.
pub fn check(wrt: &[Var<f64>], f: impl Fn() -> Result<Var<f64>>, h: f64, seed: u64) -> Result<f64> {
    let out_shape = f()?.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Var::constant(random_tensor(&out_shape, -1.0, 1.0, &mut rng));
    let loss = || -> Result<Var<f64>> { Ok(ops::sum(&ops::mul(&f()?, &r)?)) };

    for v in wrt {
        if !v.requires_grad() {
            return Err(Error::Contract(
                "gradient check over a non-trainable var".into(),
            ));
        }
        v.zero_grad();
    }
    loss()?.backward()?;
    let analytic: Vec<Tensor<f64>> = wrt
        .iter()
        .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
        .collect();

    let mut worst = 0.0f64;
    for (v, a) in wrt.iter().zip(&analytic) {
        for i in 0..a.numel() {
            let orig = v.value().data()[i];
            v.value_mut().data_mut()[i] = orig + h;
            let up = loss()?.item();
            v.value_mut().data_mut()[i] = orig - h;
            let down = loss()?.item();
            v.value_mut().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(a.data()[i], numeric));
        }
        v.zero_grad();
    }
    Ok(worst)
}
