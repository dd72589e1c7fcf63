use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if !(config.lr > 0.0) || !(config.eps > 0.0) {
            return Err(Error::invalid("adam lr and eps must be positive"));
        }
        Ok(AdamState {
            config,
            step_count: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        })
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape(format!(
                "adam over {} parameters given {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, AdamConfig::default()).unwrap();
        let mut p = [1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_is_learning_rate() {
        let mut s = AdamState::new(1, AdamConfig::default()).unwrap();
        let mut p = [0.0];
        s.step(&mut p, &[1.0]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut s = AdamState::new(1, AdamConfig::default()).unwrap();
        let mut p = [0.0];
        s.step(&mut p, &[-2.0]).unwrap();
        let first = p[0];
        s.step(&mut p, &[-2.0]).unwrap();
        assert!(first > 0.0 && p[0] > first);
    }

    #[test]
    fn rejects_mismatch_and_bad_config() {
        let mut s = AdamState::new(2, AdamConfig::default()).unwrap();
        assert!(matches!(s.step(&mut [0.0; 3], &[0.0; 3]), Err(Error::Shape(_))));
        let bad = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(AdamState::new(1, bad).is_err());
    }
}
