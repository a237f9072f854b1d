//! Bias-corrected Adam over a flat parameter vector.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update. Non-finite gradients abort with a divergence error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence {
                step: self.t as usize,
                what: "non-finite gradient".into(),
            });
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut adam = Adam::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.3, -40.0, 1e-3]).unwrap();
        // bias-corrected first step is lr * g/|g| up to eps effects
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((p[1] - (-2.0 + 0.01)).abs() < 1e-6);
        assert!((p[2] - (0.5 - 0.01)).abs() < 1e-4);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut adam = Adam::new(2, 0.0);
        let mut p = vec![1.0, 2.0];
        adam.step(&mut p, &[5.0, -3.0]).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, 2.0];
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut adam = Adam::new(1, 0.1);
        let mut p = vec![1.0];
        assert!(matches!(
            adam.step(&mut p, &[f64::NAN]),
            Err(Error::TrainingDivergence { .. })
        ));
    }
}
