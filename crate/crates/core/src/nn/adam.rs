use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(10.0),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate >= 0.0) {
            return Err("learning_rate must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("Adam betas must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return Err("Adam epsilon must be positive".into());
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err("clip_norm must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    /// Non-finite gradients leave every piece of state untouched.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<f64> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        let norm = grads.iter().map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteGradient { norm });
        }
        let scale = match self.config.clip_norm {
            Some(c) if norm > c => T::of(c / norm),
            _ => T::one(),
        };
        self.t += 1;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let bc1 = 1.0 - self.config.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.config.beta2.powi(self.t as i32);
        let step = T::of(self.config.learning_rate * bc2.sqrt() / bc1);
        let eps = T::of(self.config.epsilon * bc2.sqrt());
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g * scale;
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
        Ok(norm)
    }
}
