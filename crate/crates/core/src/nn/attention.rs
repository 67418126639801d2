//! Row softmax and multi-head scaled dot-product attention.

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::uniform_fan_in;
use super::tensor::ParamTensor;
use crate::error::{Error, Result};

/// Numerically stable softmax over each row.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Given s = softmax(x) and dL/ds, returns dL/dx.
pub fn softmax_backward(softmax_out: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
    let mut grad_in = Array2::zeros(softmax_out.raw_dim());
    for r in 0..softmax_out.dim().0 {
        let srow = softmax_out.row(r);
        let grow = grad_out.row(r);
        let dot: f64 = srow.iter().zip(grow.iter()).map(|(s, g)| s * g).sum();
        for c in 0..softmax_out.dim().1 {
            grad_in[(r, c)] = srow[c] * (grow[c] - dot);
        }
    }
    grad_in
}

/// Attention weights cached per head for the backward pass.
#[derive(Debug)]
pub struct AttnCache {
    weights: Vec<Array2<f64>>,
    head_count: usize,
}

fn check_heads(dim: usize, head_count: usize) -> Result<usize> {
    if head_count == 0 || dim % head_count != 0 {
        return Err(Error::Config(format!(
            "attention: hidden dim {dim} is not divisible by head count {head_count}"
        )));
    }
    Ok(dim / head_count)
}

/// Scaled dot-product attention over already-projected Q (n_q, d), K and
/// V (n_k, d). Splits the feature axis into `head_count` heads; the 1/sqrt(d)
/// scaling uses the per-head dimension. Heads are concatenated back.
pub fn multi_head_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    head_count: usize,
) -> Result<(Array2<f64>, AttnCache)> {
    let d = q.dim().1;
    if k.dim().1 != d || v.dim().1 != d {
        return Err(Error::Config(format!(
            "attention: Q/K/V widths differ ({}, {}, {})",
            d,
            k.dim().1,
            v.dim().1
        )));
    }
    if k.dim().0 != v.dim().0 {
        return Err(Error::Config("attention: K and V row counts differ".into()));
    }
    let d_head = check_heads(d, head_count)?;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut out = Array2::zeros((q.dim().0, d));
    let mut weights = Vec::with_capacity(head_count);
    for h in 0..head_count {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        let qh = q.slice(cols).to_owned();
        let kh = k.slice(cols).to_owned();
        let vh = v.slice(cols).to_owned();
        let scores = qh.dot(&kh.t()) * scale;
        let a = softmax_rows(&scores);
        out.slice_mut(cols).assign(&a.dot(&vh));
        weights.push(a);
    }
    Ok((out, AttnCache { weights, head_count }))
}

/// Backward of `multi_head_attention`. Returns (dQ, dK, dV).
pub fn multi_head_attention_backward(
    cache: &AttnCache,
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    grad_out: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = q.dim().1;
    let d_head = d / cache.head_count;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut dq = Array2::zeros(q.raw_dim());
    let mut dk = Array2::zeros(k.raw_dim());
    let mut dv = Array2::zeros(v.raw_dim());
    for h in 0..cache.head_count {
        let cols = s![.., h * d_head..(h + 1) * d_head];
        let qh = q.slice(cols).to_owned();
        let kh = k.slice(cols).to_owned();
        let vh = v.slice(cols).to_owned();
        let a = &cache.weights[h];
        let go = grad_out.slice(cols).to_owned();

        let da = go.dot(&vh.t());
        let dvh = a.t().dot(&go);
        let dscores = softmax_backward(a, &da) * scale;
        let dqh = dscores.dot(&kh);
        let dkh = dscores.t().dot(&qh);

        dq.slice_mut(cols).assign(&dqh);
        dk.slice_mut(cols).assign(&dkh);
        dv.slice_mut(cols).assign(&dvh);
    }
    (dq, dk, dv)
}

/// Attention block owning the Q/K/V projections and one output projection,
/// with a residual connection from the query input: out = q_in + attn W_o.
/// Without the residual a freshly initialized block collapses every position
/// to the value mean, which silences the conditioning path entirely.
/// Self-attention passes the same tensor for both inputs; cross-attention
/// projects queries from one sequence and keys/values from the other.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionBlock {
    w_q: ParamTensor,
    w_k: ParamTensor,
    w_v: ParamTensor,
    w_o: ParamTensor,
    head_count: usize,
}

#[derive(Debug)]
pub struct BlockCache {
    q_in: Array2<f64>,
    kv_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    mixed: Array2<f64>,
    attn: AttnCache,
}

impl AttentionBlock {
    pub fn new(name: &str, dim: usize, head_count: usize, rng: &mut impl Rng) -> Result<Self> {
        check_heads(dim, head_count)?;
        Ok(Self {
            w_q: ParamTensor::new(format!("{name}.w_q"), uniform_fan_in(dim, dim, dim, rng)),
            w_k: ParamTensor::new(format!("{name}.w_k"), uniform_fan_in(dim, dim, dim, rng)),
            w_v: ParamTensor::new(format!("{name}.w_v"), uniform_fan_in(dim, dim, dim, rng)),
            w_o: ParamTensor::new(format!("{name}.w_o"), uniform_fan_in(dim, dim, dim, rng)),
            head_count,
        })
    }

    pub fn head_count(&self) -> usize {
        self.head_count
    }

    pub fn dim(&self) -> usize {
        self.w_q.shape().0
    }

    pub fn forward(&self, q_in: &Array2<f64>, kv_in: &Array2<f64>) -> Result<(Array2<f64>, BlockCache)> {
        let q = q_in.dot(self.w_q.values());
        let k = kv_in.dot(self.w_k.values());
        let v = kv_in.dot(self.w_v.values());
        let (mixed, attn) = multi_head_attention(&q, &k, &v, self.head_count)?;
        let out = q_in + &mixed.dot(self.w_o.values());
        Ok((
            out,
            BlockCache {
                q_in: q_in.clone(),
                kv_in: kv_in.clone(),
                q,
                k,
                v,
                mixed,
                attn,
            },
        ))
    }

    /// Returns (d q_in, d kv_in); the caller adds them together for
    /// self-attention use.
    pub fn backward(&mut self, cache: &BlockCache, grad_out: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        self.w_o.accumulate_grad(&cache.mixed.t().dot(grad_out));
        let d_mixed = grad_out.dot(&self.w_o.values().t());
        let (dq, dk, dv) =
            multi_head_attention_backward(&cache.attn, &cache.q, &cache.k, &cache.v, &d_mixed);
        self.w_q.accumulate_grad(&cache.q_in.t().dot(&dq));
        self.w_k.accumulate_grad(&cache.kv_in.t().dot(&dk));
        self.w_v.accumulate_grad(&cache.kv_in.t().dot(&dv));
        // Residual: grad_out flows straight back to q_in as well.
        let d_q_in = dq.dot(&self.w_q.values().t()) + grad_out;
        let d_kv_in = dk.dot(&self.w_k.values().t()) + dv.dot(&self.w_v.values().t());
        (d_q_in, d_kv_in)
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_q, &self.w_k, &self.w_v, &self.w_o]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_o]
    }
}
