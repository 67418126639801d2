//! Dense affine layer with explicit backward pass.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::uniform_fan_in;
use super::tensor::ParamTensor;
use crate::error::{Error, Result};

/// y = x W + b over row-major activations: x is (n, d_in), W is (d_in, d_out),
/// b a single row broadcast over the n rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    w: ParamTensor,
    b: ParamTensor,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: ParamTensor::new(format!("{name}.w"), uniform_fan_in(d_in, d_out, d_in, rng)),
            b: ParamTensor::new(format!("{name}.b"), uniform_fan_in(1, d_out, d_in, rng)),
        }
    }

    pub fn from_parts(w: ParamTensor, b: ParamTensor) -> Self {
        Self { w, b }
    }

    pub fn d_in(&self) -> usize {
        self.w.shape().0
    }

    pub fn d_out(&self) -> usize {
        self.w.shape().1
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.dim().1 != self.d_in() {
            return Err(Error::Config(format!(
                "linear '{}': input width {} does not match weight rows {}",
                self.w.name(),
                x.dim().1,
                self.d_in()
            )));
        }
        Ok(x.dot(self.w.values()) + self.b.values())
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `x`.
    /// `x` must be the exact input of the matching forward call.
    pub fn backward(&mut self, x: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
        self.w.accumulate_grad(&x.t().dot(grad_out));
        let row_sum = grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.b.accumulate_grad(&row_sum);
        grad_out.dot(&self.w.values().t())
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w, &mut self.b]
    }
}
