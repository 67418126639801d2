//! Quantile-regression baseline: the condition-encoder backbone with a head
//! that emits five quantile tracks per step, trained by summed pinball
//! losses. Also the per-step climatology reference.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;

use crate::data::{ForecastWindow, NormalizationStats, NormalizedWindow};
use crate::denoiser::ConditionSet;
use crate::error::{Error, Result};
use crate::eval::ensemble::QUANTILE_LEVELS;
use crate::eval::metrics::pinball_loss;
use crate::nn::init::substream_rng;
use crate::nn::{Adam, AttentionBlock, Linear, Lstm};

#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    pub horizon: usize,
    pub history_steps: usize,
    pub hidden_dim: usize,
    pub head_count: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            horizon: 96,
            history_steps: 480,
            hidden_dim: 32,
            head_count: 4,
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 16,
            seed: 42,
        }
    }
}

/// Five quantile tracks per horizon step, in normalized load units.
pub struct QuantileBaseline {
    cfg: BaselineConfig,
    cond_lstm: Lstm,
    static_linear: Linear,
    cond_attn: AttentionBlock,
    head_attn: AttentionBlock,
    head_out: Linear,
}

impl QuantileBaseline {
    pub fn new(cfg: BaselineConfig) -> Result<Self> {
        if cfg.history_steps % cfg.horizon != 0 {
            return Err(Error::Config("history_steps must be a multiple of horizon".into()));
        }
        let h = cfg.hidden_dim;
        let days = cfg.history_steps / cfg.horizon;
        let tokens = cfg.horizon + 1;
        let mut rng = substream_rng(cfg.seed, 0xBA5E);
        Ok(Self {
            cond_lstm: Lstm::new("baseline.lstm", days + 2, h, &mut rng),
            static_linear: Linear::new("baseline.static", 8, h, &mut rng),
            cond_attn: AttentionBlock::new("baseline.self_attn", h, cfg.head_count, &mut rng)?,
            head_attn: AttentionBlock::new("baseline.head_attn", h, cfg.head_count, &mut rng)?,
            head_out: Linear::new(
                "baseline.out",
                tokens * h,
                QUANTILE_LEVELS.len() * cfg.horizon,
                &mut rng,
            ),
            cfg,
        })
    }

    fn cond_input(&self, cond: &ConditionSet) -> Array2<f64> {
        let tau = self.cfg.horizon;
        let days = self.cfg.history_steps / tau;
        let mut x = Array2::zeros((tau, days + 2));
        for j in 0..tau {
            for d in 0..days {
                x[(j, d)] = cond.history[d * tau + j];
            }
            x[(j, days)] = cond.temperature[j];
            x[(j, days + 1)] = cond.humidity[j];
        }
        x
    }

    /// Returns levels x tau track matrix in normalized units.
    pub fn predict(&self, cond: &ConditionSet) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(cond)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn forward(&self, cond: &ConditionSet) -> Result<(Vec<Vec<f64>>, BaselineCache)> {
        cond.validate(self.cfg.history_steps, self.cfg.horizon)?;
        let cond_in = self.cond_input(cond);
        let (hidden, lstm_cache) = self.cond_lstm.forward(&cond_in)?;
        let mut static_in = Array2::zeros((1, 8));
        for (i, &v) in cond.day_onehot.iter().enumerate() {
            static_in[(0, i)] = v;
        }
        static_in[(0, 7)] = cond.ev_count;
        let static_tok = self.static_linear.forward(&static_in)?;
        let mut tokens = Array2::zeros((hidden.dim().0 + 1, hidden.dim().1));
        tokens.slice_mut(s![..hidden.dim().0, ..]).assign(&hidden);
        tokens.slice_mut(s![hidden.dim().0.., ..]).assign(&static_tok);
        let (latent, attn_cache) = self.cond_attn.forward(&tokens, &tokens)?;
        let (head_latent, head_cache) = self.head_attn.forward(&latent, &latent)?;
        let (rows, width) = head_latent.dim();
        let flat = head_latent.into_shape_with_order((1, rows * width)).expect("contiguous");
        let out = self.head_out.forward(&flat)?;

        let tau = self.cfg.horizon;
        let tracks: Vec<Vec<f64>> = (0..QUANTILE_LEVELS.len())
            .map(|l| (0..tau).map(|j| out[(0, l * tau + j)]).collect())
            .collect();
        Ok((
            tracks,
            BaselineCache { cond_in, lstm: lstm_cache, static_in, attn: attn_cache, head: head_cache, flat },
        ))
    }

    fn backward(&mut self, cache: &BaselineCache, grad_tracks: &[Vec<f64>]) {
        let tau = self.cfg.horizon;
        let mut grad_out = Array2::zeros((1, QUANTILE_LEVELS.len() * tau));
        for (l, g) in grad_tracks.iter().enumerate() {
            for j in 0..tau {
                grad_out[(0, l * tau + j)] = g[j];
            }
        }
        let d_flat = self.head_out.backward(&cache.flat, &grad_out);
        let rows = tau + 1;
        let width = self.cfg.hidden_dim;
        let d_head = d_flat.into_shape_with_order((rows, width)).expect("contiguous");
        let (dq, dkv) = self.head_attn.backward(&cache.head, &d_head);
        let d_latent = dq + dkv;
        let (dq, dkv) = self.cond_attn.backward(&cache.attn, &d_latent);
        let d_tokens = dq + dkv;
        let n_temporal = cache.cond_in.dim().0;
        let d_static = d_tokens.slice(s![n_temporal.., ..]).to_owned();
        self.static_linear.backward(&cache.static_in, &d_static);
        let d_hidden = d_tokens.slice(s![..n_temporal, ..]).to_owned();
        self.cond_lstm.backward(&cache.lstm, &d_hidden);
    }

    fn params_mut(&mut self) -> Vec<&mut crate::nn::ParamTensor> {
        let mut v = self.cond_lstm.params_mut();
        v.extend(self.static_linear.params_mut());
        v.extend(self.cond_attn.params_mut());
        v.extend(self.head_attn.params_mut());
        v.extend(self.head_out.params_mut());
        v
    }

    /// Summed pinball losses over the five levels, averaged over steps and
    /// batch. The tracks are not order-constrained; crossings are reported,
    /// not repaired.
    pub fn train(&mut self, windows: &[NormalizedWindow]) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Err(Error::Data("no baseline training windows".into()));
        }
        let mut adam = Adam::new(self.cfg.learning_rate);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut curve = Vec::with_capacity(self.cfg.epochs);
        let tau = self.cfg.horizon;
        for epoch in 0..self.cfg.epochs {
            let mut rng = substream_rng(self.cfg.seed ^ 0xB00 + epoch as u64, 1);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(self.cfg.batch_size) {
                for p in self.params_mut() {
                    p.zero_grad();
                }
                let scale = 1.0 / (chunk.len() * tau) as f64;
                let mut batch_loss = 0.0;
                for &i in chunk {
                    let w = &windows[i];
                    let (tracks, cache) = self.forward(&w.condition)?;
                    let mut grads = vec![vec![0.0; tau]; QUANTILE_LEVELS.len()];
                    for (l, &q) in QUANTILE_LEVELS.iter().enumerate() {
                        for j in 0..tau {
                            let pred = tracks[l][j];
                            let y = w.target[j];
                            batch_loss += pinball_loss(pred, y, q) * scale;
                            grads[l][j] = if y >= pred { -q } else { 1.0 - q } * scale;
                        }
                    }
                    self.backward(&cache, &grads);
                }
                if !batch_loss.is_finite() {
                    return Err(Error::Training(format!(
                        "quantile baseline diverged at epoch {epoch}"
                    )));
                }
                adam.step(&mut self.params_mut())?;
                epoch_loss += batch_loss;
                batches += 1;
            }
            curve.push(epoch_loss / batches as f64);
        }
        Ok(curve)
    }

    /// Tracks in physical kW with the reporting floor applied.
    pub fn predict_kw(&self, cond: &ConditionSet, stats: &NormalizationStats) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .predict(cond)?
            .into_iter()
            .map(|track| stats.denormalize_load_clamped(&track))
            .collect())
    }
}

struct BaselineCache {
    cond_in: Array2<f64>,
    lstm: crate::nn::lstm::LstmCache,
    static_in: Array2<f64>,
    attn: crate::nn::attention::BlockCache,
    head: crate::nn::attention::BlockCache,
    flat: Array2<f64>,
}

/// Fraction of adjacent-level crossings over all steps.
pub fn crossing_rate(tracks: &[Vec<f64>]) -> f64 {
    let tau = tracks[0].len();
    let pairs = tracks.len() - 1;
    let mut crossings = 0usize;
    for l in 1..tracks.len() {
        for j in 0..tau {
            if tracks[l][j] < tracks[l - 1][j] {
                crossings += 1;
            }
        }
    }
    crossings as f64 / (pairs * tau) as f64
}

/// Per-step mean of the training targets, in kW.
pub fn climatology(train: &[ForecastWindow]) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::Data("climatology needs training windows".into()));
    }
    let tau = train[0].target.len();
    let mut mean = vec![0.0; tau];
    for w in train {
        for j in 0..tau {
            mean[j] += w.target[j];
        }
    }
    for m in &mut mean {
        *m /= train.len() as f64;
    }
    Ok(mean)
}
