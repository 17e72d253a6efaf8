//! First-order optimizers and learning-rate schedules.
//!
//! Parameters whose gradient is `None` are skipped outright: no weight
//! decay, no momentum, no state update. The supernet relies on this so that
//! operators outside the sampled path stay bitwise untouched.

use std::f64::consts::PI;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + (g + wd·p)`, `p ← p − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [Tensor<T>],
        grads: &[Option<Tensor<T>>],
        lr: f64,
    ) -> Result<()> {
        check_lengths(params, grads)?;
        self.velocity.resize(params.len(), None);
        let (mu, wd, lr) = (T::of(self.momentum), T::of(self.weight_decay), T::of(lr));
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let Some(g) = g else { continue };
            let v = v.get_or_insert_with(|| Tensor::zeros(p.shape()));
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                let d = gv + wd * *pv;
                *vv = mu * *vv + d;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

/// First moment, second moment and step count of one parameter.
type Moments<T> = (Tensor<T>, Tensor<T>, i32);

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    state: Vec<Option<Moments<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            state: Vec::new(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [Tensor<T>],
        grads: &[Option<Tensor<T>>],
        lr: f64,
    ) -> Result<()> {
        check_lengths(params, grads)?;
        self.state.resize(params.len(), None);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (eps, wd) = (T::of(self.eps), T::of(self.weight_decay));
        for ((p, g), st) in params.iter_mut().zip(grads).zip(&mut self.state) {
            let Some(g) = g else { continue };
            let (m, v, t) =
                st.get_or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape()), 0));
            *t += 1;
            let c1 = T::one() - b1.powi(*t);
            let c2 = T::one() - b2.powi(*t);
            let step = T::of(lr);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let d = gv + wd * *pv;
                *mv = b1 * *mv + (T::one() - b1) * d;
                *vv = b2 * *vv + (T::one() - b2) * d * d;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= step * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn check_lengths<T>(params: &[Tensor<T>], grads: &[Option<Tensor<T>>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Contract(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    Ok(())
}

/// Cosine decay from `base` at step 0 to 0 at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total) as f64) / total as f64;
    0.5 * base * (1.0 + (PI * t).cos())
}

/// Linear ramp from `start` to `base` over `warmup` steps, then cosine decay
/// over the remainder.
pub fn warmup_cosine_lr(base: f64, start: f64, step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        start + (base - start) * step as f64 / warmup as f64
    } else {
        cosine_lr(base, step - warmup, total.saturating_sub(warmup))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut sgd = Sgd::new(0.9, 3e-5);
        let mut p = vec![scalar(2.0)];
        sgd.step(&mut p, &[Some(scalar(0.0))], 0.1).unwrap();
        assert_eq!(p[0].item(), 2.0 - 0.1 * 3e-5 * 2.0);
    }

    #[test]
    fn momentum_recursion_on_quadratic() {
        // f(p) = p², gradient 2p, hand-unrolled for three steps.
        let (lr, mu) = (0.1, 0.9);
        let mut sgd = Sgd::new(mu, 0.0);
        let mut p = vec![scalar(1.0)];
        let (mut x, mut v) = (1.0f64, 0.0f64);
        for _ in 0..3 {
            let g = 2.0 * p[0].item();
            sgd.step(&mut p, &[Some(scalar(g))], lr).unwrap();
            v = mu * v + 2.0 * x;
            x -= lr * v;
        }
        assert_eq!(p[0].item(), x);
        // 1 → 0.8 → 0.46 → 0.062
        assert!((x - 0.062).abs() < 1e-12, "{x}");
    }

    #[test]
    fn missing_gradients_leave_parameters_alone() {
        let mut sgd = Sgd::new(0.9, 0.1);
        let mut adam = Adam::new(0.1);
        let mut p = vec![scalar(1.0), scalar(1.0)];
        sgd.step(&mut p, &[None, Some(scalar(1.0))], 0.1).unwrap();
        adam.step(&mut p, &[None, Some(scalar(1.0))], 0.1).unwrap();
        assert_eq!(p[0].item(), 1.0);
        assert!(p[1].item() < 1.0);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut adam = Adam::new(0.0);
        let mut p = vec![scalar(0.0)];
        adam.step(&mut p, &[Some(scalar(-3.0))], 0.01).unwrap();
        assert!((p[0].item() - 0.01).abs() < 1e-8);
    }

    #[test]
    fn schedules() {
        assert_eq!(cosine_lr(0.1, 0, 10), 0.1);
        assert!(cosine_lr(0.1, 10, 10).abs() < 1e-15);
        assert!((cosine_lr(0.1, 5, 10) - 0.05).abs() < 1e-15);
        assert_eq!(warmup_cosine_lr(0.5, 0.1, 0, 5, 100), 0.1);
        assert!((warmup_cosine_lr(0.5, 0.1, 4, 5, 100) - 0.42).abs() < 1e-12);
        assert_eq!(warmup_cosine_lr(0.5, 0.1, 5, 5, 100), 0.5);
    }
}
