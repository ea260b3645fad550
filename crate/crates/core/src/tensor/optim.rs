//! Adam with bias correction.

use super::nn::Param;
use super::{Real, Tensor};

pub const ADAM_LR: f64 = 1e-4;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub struct Adam<T: Real = f32> {
    params: Vec<Param<T>>,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: Vec<Param<T>>, lr: f64) -> Self {
        let m: Vec<_> = params
            .iter()
            .map(|p| Tensor::zeros(&p.var.shape()))
            .collect();
        let v = m.clone();
        Adam {
            params,
            m,
            v,
            step: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    /// Parameters without a gradient keep their moments unchanged.
    pub fn step(&mut self) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        let (c1, c2) = (T::lit(c1), T::lit(c2));
        for ((p, m), v) in self.params.iter().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.var.grad() else { continue };
            let mut value = p.var.value_mut();
            let iter = value
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data());
            for (((w, m), v), &g) in iter {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            drop(value);
            p.var.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Var;

    #[test]
    fn first_step_moves_against_gradient_by_lr() {
        let p = Param::new(
            "w",
            Var::leaf(Tensor::<f64>::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap()),
        );
        let grads = [0.5, -2.0, 1e-3];
        let loss = crate::tensor::ops::sum(
            &crate::tensor::ops::mul(
                &p.var,
                &Var::constant(Tensor::from_vec(&[3], grads.to_vec()).unwrap()),
            )
            .unwrap(),
        );
        loss.backward().unwrap();
        let mut opt = Adam::new(vec![p.clone()], 0.01);
        opt.step();
        for (i, &g) in grads.iter().enumerate() {
            // step 1: mhat = g, vhat = g^2
            let expect = 1.0 - 0.01 * g / (g.abs() + ADAM_EPS);
            assert!((p.var.value().data()[i] - expect).abs() < 1e-12);
        }
        assert!(p.var.grad().is_none());
    }

    #[test]
    fn zero_lr_leaves_params() {
        let p = Param::new("w", Var::leaf(Tensor::<f32>::full(&[2], 0.25)));
        crate::tensor::ops::sum(&p.var).backward().unwrap();
        let mut opt = Adam::new(vec![p.clone()], 0.0);
        opt.step();
        assert_eq!(p.var.value().data(), &[0.25, 0.25]);
    }
}
