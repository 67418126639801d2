//! Adam optimizer with bias correction.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tensor::ParamTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Moments {
    first: Array2<f64>,
    second: Array2<f64>,
}

/// Optimizer state: per-parameter moment accumulators keyed by parameter
/// name, plus the shared step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    moments: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            moments: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected update over the given parameters. Gradients are
    /// cleared afterwards. A non-finite gradient aborts with the offending
    /// parameter's name before any parameter is touched.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        for p in params.iter() {
            if !p.grad().iter().all(|g| g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient on parameter '{}'",
                    p.name()
                )));
            }
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for p in params.iter_mut() {
            let entry = self.moments.entry(p.name().to_string()).or_insert_with(|| Moments {
                first: Array2::zeros(p.values().raw_dim()),
                second: Array2::zeros(p.values().raw_dim()),
            });
            if entry.first.raw_dim() != p.values().raw_dim() {
                return Err(Error::Config(format!(
                    "adam moments shape mismatch for parameter '{}'",
                    p.name()
                )));
            }
            let g = p.grad().clone();
            entry.first = &entry.first * self.beta1 + &g * (1.0 - self.beta1);
            entry.second = &entry.second * self.beta2 + &(&g * &g) * (1.0 - self.beta2);
            let m_hat = &entry.first / bc1;
            let v_hat = &entry.second / bc2;
            let update = m_hat / (v_hat.mapv(f64::sqrt) + self.epsilon) * self.learning_rate;
            *p.values_mut() -= &update;
            p.zero_grad();
        }
        Ok(())
    }
}
