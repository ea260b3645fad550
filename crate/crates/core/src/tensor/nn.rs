//! Parameterized layers. Every parameter carries a stable dotted name.

use rand::Rng;

use super::ops::{self, BatchNormStats};
use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Param<T: Real = f32> {
    pub name: String,
    pub var: Var<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, var: Var<T>) -> Self {
        Param {
            name: name.into(),
            var,
        }
    }
}

/// Kaiming-uniform tensor: entries uniform in `±sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

fn leaf<T: Real>(name: String, t: Tensor<T>) -> Param<T> {
    Param::new(name, Var::leaf(t))
}

pub struct Conv2d<T: Real = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, rng: &mut impl Rng) -> Self {
        Conv2d {
            weight: leaf(
                format!("{name}.weight"),
                kaiming_uniform(&[cout, cin, k, k], cin * k * k, rng),
            ),
            bias: leaf(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        ops::conv2d(x, &self.weight.var, &self.bias.var)
    }

    pub fn params(&self, out: &mut Vec<Param<T>>) {
        out.extend([self.weight.clone(), self.bias.clone()]);
    }
}

pub struct BatchNorm2d<T: Real = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub stats: BatchNormStats<T>,
    pub name: String,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: leaf(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: leaf(format!("{name}.beta"), Tensor::zeros(&[channels])),
            stats: BatchNormStats::new(channels),
            name: name.to_string(),
        }
    }

    pub fn forward(&self, x: &Var<T>, train: bool) -> Result<Var<T>> {
        ops::batch_norm(x, &self.gamma.var, &self.beta.var, &self.stats, train)
    }

    pub fn params(&self, out: &mut Vec<Param<T>>) {
        out.extend([self.gamma.clone(), self.beta.clone()]);
    }
}

pub struct Linear<T: Real = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: leaf(
                format!("{name}.weight"),
                kaiming_uniform(&[d_in, d_out], d_in, rng),
            ),
            bias: leaf(format!("{name}.bias"), Tensor::zeros(&[d_out])),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        ops::linear(x, &self.weight.var, &self.bias.var)
    }

    pub fn params(&self, out: &mut Vec<Param<T>>) {
        out.extend([self.weight.clone(), self.bias.clone()]);
    }
}

pub struct LayerNorm<T: Real = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: leaf(format!("{name}.gamma"), Tensor::full(&[d], T::one())),
            beta: leaf(format!("{name}.beta"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        ops::layer_norm(x, &self.gamma.var, &self.beta.var)
    }

    pub fn params(&self, out: &mut Vec<Param<T>>) {
        out.extend([self.gamma.clone(), self.beta.clone()]);
    }
}

/// Multi-head scaled dot-product self-attention over `[N, T, d]`.
pub struct MultiHeadAttention<T: Real = f32> {
    pub heads: usize,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn new(name: &str, d: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Contract(format!(
                "attention width {d} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            heads,
            query: Linear::new(&format!("{name}.query"), d, d, rng),
            key: Linear::new(&format!("{name}.key"), d, d, rng),
            value: Linear::new(&format!("{name}.value"), d, d, rng),
            output: Linear::new(&format!("{name}.output"), d, d, rng),
        })
    }

    /// Returns the attended output and the attention weights `[N, heads, T, T]`.
    pub fn forward_with_weights(&self, x: &Var<T>) -> Result<(Var<T>, Var<T>)> {
        let s = x.shape();
        if s.len() != 3 {
            return Err(Error::Shape(format!(
                "attention needs [N, T, d], got {s:?}"
            )));
        }
        let (n, t, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        if d % h != 0 {
            return Err(Error::Contract(format!(
                "attention width {d} is not divisible by {h} heads"
            )));
        }
        let dh = d / h;
        let split = |v: &Var<T>| -> Result<Var<T>> {
            let v = ops::reshape(v, &[n, t, h, dh])?;
            let v = ops::permute(&v, &[0, 2, 1, 3])?;
            ops::reshape(&v, &[n * h, t, dh])
        };
        let q = split(&self.query.forward(x)?)?;
        let k = split(&self.key.forward(x)?)?;
        let v = split(&self.value.forward(x)?)?;
        let scores = ops::scale(&ops::bmm(&q, &k, true)?, T::lit(1.0 / (dh as f64).sqrt()));
        let weights = ops::softmax(&scores, 2)?;
        let ctx = ops::bmm(&weights, &v, false)?;
        let ctx = ops::reshape(&ctx, &[n, h, t, dh])?;
        let ctx = ops::permute(&ctx, &[0, 2, 1, 3])?;
        let ctx = ops::reshape(&ctx, &[n, t, d])?;
        let out = self.output.forward(&ctx)?;
        Ok((out, ops::reshape(&weights, &[n, h, t, t])?))
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        Ok(self.forward_with_weights(x)?.0)
    }

    pub fn params(&self, out: &mut Vec<Param<T>>) {
        for l in [&self.query, &self.key, &self.value, &self.output] {
            l.params(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kaiming_bound_and_seeding() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let ta: Tensor<f32> = kaiming_uniform(&[16, 9], 9, &mut a);
        let tb: Tensor<f32> = kaiming_uniform(&[16, 9], 9, &mut b);
        assert_eq!(ta.data(), tb.data());
        let bound = (6.0f32 / 9.0).sqrt();
        assert!(ta.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn linear_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::<f64>::new("l", 3, 3, &mut rng);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        *lin.weight.var.value_mut() = eye;
        let x =
            Var::constant(Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap());
        assert_eq!(lin.forward(&x).unwrap().value().data(), x.value().data());
    }

    #[test]
    fn attention_single_token_weights_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mha = MultiHeadAttention::<f64>::new("a", 8, 4, &mut rng).unwrap();
        let x = Var::constant(crate::tensor::gradcheck::random_tensor(
            &[2, 1, 8],
            -1.0,
            1.0,
            &mut rng,
        ));
        let (out, w) = mha.forward_with_weights(&x).unwrap();
        assert!(w.value().data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let chain = mha.output.forward(&mha.value.forward(&x).unwrap()).unwrap();
        for (a, b) in out.value().data().iter().zip(chain.value().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one_and_permute() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mha = MultiHeadAttention::<f64>::new("a", 8, 4, &mut rng).unwrap();
        let xt = crate::tensor::gradcheck::random_tensor(&[1, 3, 8], -1.0, 1.0, &mut rng);
        let (out, w) = mha
            .forward_with_weights(&Var::constant(xt.clone()))
            .unwrap();
        for row in w.value().data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // swap tokens 0 and 2
        let mut swapped = xt.clone();
        swapped.data_mut()[..8].copy_from_slice(&xt.data()[16..]);
        swapped.data_mut()[16..].copy_from_slice(&xt.data()[..8]);
        let out2 = mha.forward(&Var::constant(swapped)).unwrap();
        let (o1, o2) = (out.value(), out2.value());
        for j in 0..8 {
            assert!((o1.data()[j] - o2.data()[16 + j]).abs() < 1e-12);
            assert!((o1.data()[8 + j] - o2.data()[8 + j]).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rejects_indivisible_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            MultiHeadAttention::<f32>::new("a", 10, 4, &mut rng),
            Err(Error::Contract(_))
        ));
    }
}
