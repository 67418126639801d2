//! Single-layer unidirectional LSTM with backpropagation through time.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::uniform_fan_in;
use super::tensor::ParamTensor;
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate blocks are packed [input | forget | candidate | output] along the
/// column axis of `w_x` (d_in, 4H), `w_h` (H, 4H) and `b` (1, 4H).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm {
    w_x: ParamTensor,
    w_h: ParamTensor,
    b: ParamTensor,
    hidden: usize,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug)]
pub struct LstmCache {
    inputs: Array2<f64>,
    gates_i: Array2<f64>,
    gates_f: Array2<f64>,
    gates_g: Array2<f64>,
    gates_o: Array2<f64>,
    cells: Array2<f64>,
    tanh_cells: Array2<f64>,
    hiddens: Array2<f64>,
}

impl Lstm {
    pub fn new(name: &str, d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fan_in = d_in + hidden;
        Self {
            w_x: ParamTensor::new(format!("{name}.w_x"), uniform_fan_in(d_in, 4 * hidden, fan_in, rng)),
            w_h: ParamTensor::new(format!("{name}.w_h"), uniform_fan_in(hidden, 4 * hidden, fan_in, rng)),
            b: ParamTensor::new(format!("{name}.b"), uniform_fan_in(1, 4 * hidden, fan_in, rng)),
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn d_in(&self) -> usize {
        self.w_x.shape().0
    }

    /// Runs the recurrence over a (steps, d_in) sequence starting from zero
    /// hidden and cell state. Returns all hidden states as (steps, H).
    pub fn forward(&self, xs: &Array2<f64>) -> Result<(Array2<f64>, LstmCache)> {
        let steps = xs.dim().0;
        if steps == 0 {
            return Err(Error::Domain("lstm_sequence: empty input sequence".into()));
        }
        if xs.dim().1 != self.d_in() {
            return Err(Error::Config(format!(
                "lstm '{}': input width {} does not match {}",
                self.w_x.name(),
                xs.dim().1,
                self.d_in()
            )));
        }
        let h = self.hidden;
        let mut cache = LstmCache {
            inputs: xs.clone(),
            gates_i: Array2::zeros((steps, h)),
            gates_f: Array2::zeros((steps, h)),
            gates_g: Array2::zeros((steps, h)),
            gates_o: Array2::zeros((steps, h)),
            cells: Array2::zeros((steps, h)),
            tanh_cells: Array2::zeros((steps, h)),
            hiddens: Array2::zeros((steps, h)),
        };
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..steps {
            let x_t = xs.row(t).insert_axis(Axis(0)).to_owned();
            let h_row = h_prev.clone().insert_axis(Axis(0));
            let acts = x_t.dot(self.w_x.values()) + h_row.dot(self.w_h.values()) + self.b.values();
            let acts = acts.remove_axis(Axis(0));
            for j in 0..h {
                let i = sigmoid(acts[j]);
                let f = sigmoid(acts[h + j]);
                let g = acts[2 * h + j].tanh();
                let o = sigmoid(acts[3 * h + j]);
                let c = f * c_prev[j] + i * g;
                let tc = c.tanh();
                cache.gates_i[(t, j)] = i;
                cache.gates_f[(t, j)] = f;
                cache.gates_g[(t, j)] = g;
                cache.gates_o[(t, j)] = o;
                cache.cells[(t, j)] = c;
                cache.tanh_cells[(t, j)] = tc;
                cache.hiddens[(t, j)] = o * tc;
            }
            h_prev.assign(&cache.hiddens.row(t));
            c_prev.assign(&cache.cells.row(t));
        }
        Ok((cache.hiddens.clone(), cache))
    }

    /// Backprop through time. `grad_hs` is dL/d(hidden states), shape (steps, H).
    /// Accumulates parameter gradients and returns dL/d(inputs).
    pub fn backward(&mut self, cache: &LstmCache, grad_hs: &Array2<f64>) -> Array2<f64> {
        let (steps, h) = cache.hiddens.dim();
        let mut grad_xs = Array2::<f64>::zeros(cache.inputs.raw_dim());
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        let mut dw_x = Array2::<f64>::zeros(self.w_x.values().raw_dim());
        let mut dw_h = Array2::<f64>::zeros(self.w_h.values().raw_dim());
        let mut db = Array2::<f64>::zeros(self.b.values().raw_dim());

        for t in (0..steps).rev() {
            let mut da = Array2::<f64>::zeros((1, 4 * h));
            let mut dc_cur = Array1::<f64>::zeros(h);
            for j in 0..h {
                let dh = grad_hs[(t, j)] + dh_next[j];
                let i = cache.gates_i[(t, j)];
                let f = cache.gates_f[(t, j)];
                let g = cache.gates_g[(t, j)];
                let o = cache.gates_o[(t, j)];
                let tc = cache.tanh_cells[(t, j)];
                let c_prev = if t > 0 { cache.cells[(t - 1, j)] } else { 0.0 };

                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                let d_i = dc * g;
                let d_f = dc * c_prev;
                let d_g = dc * i;

                da[(0, j)] = d_i * i * (1.0 - i);
                da[(0, h + j)] = d_f * f * (1.0 - f);
                da[(0, 2 * h + j)] = d_g * (1.0 - g * g);
                da[(0, 3 * h + j)] = d_o * o * (1.0 - o);
                dc_cur[j] = dc * f;
            }
            let x_t = cache.inputs.row(t).insert_axis(Axis(0)).to_owned();
            dw_x += &x_t.t().dot(&da);
            if t > 0 {
                let h_prev = cache.hiddens.row(t - 1).insert_axis(Axis(0)).to_owned();
                dw_h += &h_prev.t().dot(&da);
                dh_next.assign(&da.dot(&self.w_h.values().t()).remove_axis(Axis(0)));
            } else {
                dh_next.fill(0.0);
            }
            db += &da;
            let dx = da.dot(&self.w_x.values().t()).remove_axis(Axis(0));
            grad_xs.slice_mut(s![t, ..]).assign(&dx);
            dc_next = dc_cur;
        }
        self.w_x.accumulate_grad(&dw_x);
        self.w_h.accumulate_grad(&dw_h);
        self.b.accumulate_grad(&db);
        grad_xs
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_x, &self.w_h, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }
}
