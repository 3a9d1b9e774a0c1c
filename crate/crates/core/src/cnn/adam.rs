use serde::{Deserialize, Serialize};

use super::params::DenoiserParams;
use super::real::Real;
use crate::error::{Error, Result};

/// Hyperparameters of the adaptive-moment optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid optimizer settings: lr {}, betas ({}, {}), eps {}",
                self.learning_rate, self.beta1, self.beta2, self.epsilon
            )))
        }
    }
}

/// Moment estimates for one parameter set.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    first: Vec<T>,
    second: Vec<T>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        let n = super::params::param_count();
        Self {
            config,
            first: vec![T::zero(); n],
            second: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected update. Rejects non-finite gradients without
    /// touching the parameters.
    pub fn step(
        &mut self,
        params: &mut DenoiserParams<T>,
        grads: &DenoiserParams<T>,
    ) -> Result<()> {
        let g = grads.values();
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient at index {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step_size = T::from_f64(c.learning_rate / (1.0 - c.beta1.powi(t)));
        let second_corr = T::from_f64(1.0 / (1.0 - c.beta2.powi(t)));
        let eps = T::from_f64(c.epsilon);
        for (((p, &gv), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(g)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = b1 * *m + one_b1 * gv;
            *v = b2 * *v + one_b2 * gv * gv;
            *p = *p - step_size * *m / ((*v * second_corr).sqrt() + eps);
        }
        Ok(())
    }
}
