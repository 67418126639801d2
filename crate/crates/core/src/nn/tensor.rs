//! Named parameter tensors with gradient accumulators.

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// A learnable parameter: a named matrix plus a gradient buffer of the same
/// shape. Vectors (biases) are stored as single-row matrices so that all
/// layer math runs over row-major activations.
#[derive(Debug, Clone, Serialize)]
pub struct ParamTensor {
    name: String,
    values: Array2<f64>,
    #[serde(skip)]
    grad: Array2<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, values: Array2<f64>) -> Self {
        let grad = Array2::zeros(values.raw_dim());
        Self { name: name.into(), values, grad }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        let d = self.values.dim();
        (d.0, d.1)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn grad(&self) -> &Array2<f64> {
        &self.grad
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &Array2<f64>) {
        self.grad += delta;
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Fails with the parameter name if any entry of values or grad is non-finite.
    pub fn check_finite(&self) -> Result<()> {
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(Error::Training(format!(
                "parameter '{}' contains non-finite values",
                self.name
            )));
        }
        if !self.grad.iter().all(|v| v.is_finite()) {
            return Err(Error::Training(format!(
                "gradient of parameter '{}' is non-finite",
                self.name
            )));
        }
        Ok(())
    }

    /// Flat read access used by gradient-checking tests.
    pub fn value_at(&self, idx: usize) -> f64 {
        let cols = self.values.dim().1;
        self.values[(idx / cols, idx % cols)]
    }

    /// Flat write access used by gradient-checking tests.
    pub fn nudge_at(&mut self, idx: usize, delta: f64) {
        let cols = self.values.dim().1;
        self.values[(idx / cols, idx % cols)] += delta;
    }

    pub fn grad_at(&self, idx: usize) -> f64 {
        let cols = self.grad.dim().1;
        self.grad[(idx / cols, idx % cols)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<'de> Deserialize<'de> for ParamTensor {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            values: Array2<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(ParamTensor::new(raw.name, raw.values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn grad_matches_value_shape() {
        let p = ParamTensor::new("w", array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(p.shape(), (2, 2));
        assert_eq!(p.grad().dim(), (2, 2));
        assert!(p.grad().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_grad_is_reported_with_name() {
        let mut p = ParamTensor::new("w_q", array![[1.0]]);
        p.accumulate_grad(&array![[f64::NAN]]);
        let err = p.check_finite().unwrap_err();
        assert!(err.to_string().contains("w_q"));
    }

    #[test]
    fn serde_round_trip_restores_zero_grad() {
        let mut p = ParamTensor::new("w", array![[1.5, -2.25]]);
        p.accumulate_grad(&array![[1.0, 1.0]]);
        let json = serde_json::to_string(&p).unwrap();
        let back: ParamTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.values(), p.values());
        assert!(back.grad().iter().all(|&g| g == 0.0));
    }
}
