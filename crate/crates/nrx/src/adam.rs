//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }

    /// Applies one update to `params` given their gradient.
    pub fn update(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grad.len(), self.m.len(), "gradient shape mismatch");
        self.step += 1;
        let c = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let cv = |x: f64| T::from_f64(x).expect("finite");
        let (b1, b2) = (cv(c.beta1), cv(c.beta2));
        let (ob1, ob2) = (cv(1.0 - c.beta1), cv(1.0 - c.beta2));
        let step = cv(c.lr / bc1);
        let inv_bc2 = cv(1.0 / bc2);
        let eps = cv(c.eps);
        for (((w, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + ob1 * g;
            *v = b2 * *v + ob2 * g * g;
            *w = *w - step * *m / ((*v * inv_bc2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = vec![0.5f64, -1.25, 3.0];
        let before = w.clone();
        let mut a = AdamState::new(3, AdamConfig::with_lr(1e-3));
        a.update(&mut w, &[0.0; 3]);
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 1e-3;
        let g = [0.3f64, -2.0, 1e-3];
        let mut w = vec![0.0; 3];
        let mut a = AdamState::new(3, AdamConfig::with_lr(lr));
        a.update(&mut w, &g);
        for (&wi, &gi) in w.iter().zip(&g) {
            // m_hat = g and sqrt(v_hat) = |g|, so the step is lr |g| / (|g| + eps).
            let want = -lr * gi.signum() * gi.abs() / (gi.abs() + 1e-8);
            assert!((wi - want).abs() < 1e-15, "{wi} vs {want}");
            assert!((wi + lr * gi.signum()).abs() < 1e-7 * lr.max(1.0));
        }
    }
}
