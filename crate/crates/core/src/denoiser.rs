//! Conditional noise predictor: perturbation encoder, condition encoder,
//! cross-attention conditioning and forecast head.
//!
//! The perturbation encoder runs an LSTM over the noised profile and fuses a
//! step embedding by self-attention. The condition encoder consumes the
//! time-aligned history/weather channels through a second LSTM, appends one
//! token for the static features (day-of-week, EV count) and fuses by
//! self-attention. Cross-attention projects queries from the condition latent
//! and keys/values from the perturbation latent; the forecast head turns the
//! attended tokens into the predicted noise vector.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::init::substream_rng;
use crate::nn::{AttentionBlock, Linear, Lstm, ParamTensor};
use crate::nn::attention::BlockCache;
use crate::nn::lstm::LstmCache;

/// Conditioning inputs, already normalized to model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSet {
    /// History load, length omega.
    pub history: Vec<f64>,
    /// Temperature forecast over the horizon, length tau.
    pub temperature: Vec<f64>,
    /// Humidity forecast over the horizon, length tau.
    pub humidity: Vec<f64>,
    /// One-hot day of week, Monday = index 0.
    pub day_onehot: [f64; 7],
    /// Normalized EV count for the forecast day.
    pub ev_count: f64,
}

impl ConditionSet {
    pub fn validate(&self, history_steps: usize, horizon: usize) -> Result<()> {
        if self.history.len() != history_steps {
            return Err(Error::Data(format!(
                "condition history length {} != {history_steps}",
                self.history.len()
            )));
        }
        if self.temperature.len() != horizon || self.humidity.len() != horizon {
            return Err(Error::Data(format!(
                "weather forecast lengths ({}, {}) != horizon {horizon}",
                self.temperature.len(),
                self.humidity.len()
            )));
        }
        let ones = self.day_onehot.iter().filter(|&&v| v == 1.0).count();
        let zeros = self.day_onehot.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != 6 {
            return Err(Error::Data("day_onehot must have exactly one entry set to 1".into()));
        }
        Ok(())
    }
}

/// How the condition latent is combined with the perturbation latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// Queries from conditions, keys/values from the perturbation latent.
    CrossAttention,
    /// Ablation variant: element-wise addition of the two latents.
    LatentFusion,
}

/// Network shape parameters, persisted in the model artifact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Forecast horizon tau (steps).
    pub horizon: usize,
    /// History window omega (steps); must be a multiple of the horizon.
    pub history_steps: usize,
    pub hidden_dim: usize,
    pub head_count: usize,
    /// When false the covariate set {u, v, d, e} is discarded and the
    /// condition encoder sees the history only.
    pub use_covariates: bool,
    pub conditioning: Conditioning,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            horizon: 96,
            history_steps: 480,
            hidden_dim: 32,
            head_count: 4,
            use_covariates: true,
            conditioning: Conditioning::CrossAttention,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.history_steps == 0 {
            return Err(Error::Config("horizon and history_steps must be positive".into()));
        }
        if self.history_steps % self.horizon != 0 {
            return Err(Error::Config(format!(
                "history_steps {} must be a multiple of horizon {} for per-step time alignment",
                self.history_steps, self.horizon
            )));
        }
        if self.hidden_dim < 2 || self.hidden_dim % 2 != 0 {
            return Err(Error::Config("hidden_dim must be an even number >= 2".into()));
        }
        if self.head_count == 0 || self.hidden_dim % self.head_count != 0 {
            return Err(Error::Config(format!(
                "head_count {} must divide hidden_dim {}",
                self.head_count, self.hidden_dim
            )));
        }
        Ok(())
    }

    /// History days folded into per-step channels.
    pub fn history_days(&self) -> usize {
        self.history_steps / self.horizon
    }

    fn cond_input_dim(&self) -> usize {
        self.history_days() + if self.use_covariates { 2 } else { 0 }
    }

    /// Condition token count: horizon steps plus one static token.
    fn cond_tokens(&self) -> usize {
        self.horizon + if self.use_covariates { 1 } else { 0 }
    }

    /// Token count entering the forecast head.
    fn head_tokens(&self) -> usize {
        match self.conditioning {
            Conditioning::CrossAttention => self.cond_tokens(),
            Conditioning::LatentFusion => self.horizon,
        }
    }
}

/// The four parameter groups of the noise predictor; used to select the
/// subset refined during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    PerturbationEncoder,
    ConditionEncoder,
    CrossAttention,
    ForecastHead,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::PerturbationEncoder,
        Component::ConditionEncoder,
        Component::CrossAttention,
        Component::ForecastHead,
    ];

    pub fn name_prefix(self) -> &'static str {
        match self {
            Component::PerturbationEncoder => "perturbation_encoder.",
            Component::ConditionEncoder => "condition_encoder.",
            Component::CrossAttention => "cross_attention.",
            Component::ForecastHead => "forecast_head.",
        }
    }
}

/// All learnable parameters of the noise predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiserParams {
    config: ModelConfig,
    pert_lstm: Lstm,
    step_embed: Linear,
    pert_attn: AttentionBlock,
    cond_lstm: Lstm,
    static_linear: Option<Linear>,
    cond_attn: AttentionBlock,
    cross_attn: Option<AttentionBlock>,
    head_attn: AttentionBlock,
    head_out: Linear,
}

/// Intermediate activations of one forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    pert_lstm: LstmCache,
    step_basis: Array2<f64>,
    pert_attn: BlockCache,
    cond_in: Array2<f64>,
    cond_lstm: LstmCache,
    static_in: Option<Array2<f64>>,
    cond_attn: BlockCache,
    cond_latent: Array2<f64>,
    cross: Option<BlockCache>,
    head_in: Array2<f64>,
    head_attn: BlockCache,
    flat: Array2<f64>,
}

impl DenoiserParams {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut rng = substream_rng(seed, 0xD1FF);
        Ok(Self {
            pert_lstm: Lstm::new("perturbation_encoder.lstm", 1, h, &mut rng),
            step_embed: Linear::new("perturbation_encoder.step_embed", h, h, &mut rng),
            pert_attn: AttentionBlock::new("perturbation_encoder.self_attn", h, config.head_count, &mut rng)?,
            cond_lstm: Lstm::new("condition_encoder.lstm", config.cond_input_dim(), h, &mut rng),
            static_linear: if config.use_covariates {
                Some(Linear::new("condition_encoder.static", 8, h, &mut rng))
            } else {
                None
            },
            cond_attn: AttentionBlock::new("condition_encoder.self_attn", h, config.head_count, &mut rng)?,
            cross_attn: match config.conditioning {
                Conditioning::CrossAttention => {
                    Some(AttentionBlock::new("cross_attention", h, config.head_count, &mut rng)?)
                }
                Conditioning::LatentFusion => None,
            },
            head_attn: AttentionBlock::new("forecast_head.self_attn", h, config.head_count, &mut rng)?,
            head_out: Linear::new("forecast_head.out", config.head_tokens() * h, config.horizon, &mut rng),
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Sinusoidal positional encoding of the diffusion step followed by the
    /// learned linear layer.
    pub fn embed_step(&self, t: usize) -> Result<Array2<f64>> {
        Ok(self.step_embed.forward(&self.step_basis(t))?)
    }

    fn step_basis(&self, t: usize) -> Array2<f64> {
        let h = self.config.hidden_dim;
        let mut basis = Array2::zeros((1, h));
        for i in 0..h / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / h as f64);
            basis[(0, 2 * i)] = (t as f64 * freq).sin();
            basis[(0, 2 * i + 1)] = (t as f64 * freq).cos();
        }
        basis
    }

    /// Sinusoidal position coordinates added to both encoders' token
    /// sequences. Attention is content-based; without a shared positional
    /// basis the cross-attention cannot route horizon step j of the
    /// perturbation to step j of the output, and training stalls at the
    /// trivial eps = 0 solution.
    fn positional_basis(&self, rows: usize) -> Array2<f64> {
        let h = self.config.hidden_dim;
        let mut basis = Array2::zeros((rows, h));
        for j in 0..rows {
            for i in 0..h / 2 {
                let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / h as f64);
                basis[(j, 2 * i)] = (j as f64 * freq).sin();
                basis[(j, 2 * i + 1)] = (j as f64 * freq).cos();
            }
        }
        basis
    }

    fn check_step(&self, t: usize, t_max: usize) -> Result<()> {
        if t < 1 || t > t_max {
            return Err(Error::Domain(format!("diffusion step {t} outside 1..={t_max}")));
        }
        Ok(())
    }

    /// Perturbation encoder: LSTM over the noised profile, step embedding
    /// broadcast onto every position, self-attention fusion.
    pub fn encode_perturbation(&self, x_t: &[f64], t: usize) -> Result<(Array2<f64>, PertCache)> {
        if x_t.len() != self.config.horizon {
            return Err(Error::Data(format!(
                "perturbed profile length {} != horizon {}",
                x_t.len(),
                self.config.horizon
            )));
        }
        let x_seq = Array2::from_shape_fn((self.config.horizon, 1), |(i, _)| x_t[i]);
        let (hidden, lstm_cache) = self.pert_lstm.forward(&x_seq)?;
        let step_basis = self.step_basis(t);
        let step_vec = self.step_embed.forward(&step_basis)?;
        let tokens = &hidden + &step_vec + &self.positional_basis(hidden.dim().0);
        let (latent, attn_cache) = self.pert_attn.forward(&tokens, &tokens)?;
        Ok((latent, PertCache { lstm: lstm_cache, step_basis, attn: attn_cache }))
    }

    fn cond_input(&self, cond: &ConditionSet) -> Array2<f64> {
        let tau = self.config.horizon;
        let days = self.config.history_days();
        let dim = self.config.cond_input_dim();
        let mut x = Array2::zeros((tau, dim));
        for j in 0..tau {
            for d in 0..days {
                x[(j, d)] = cond.history[d * tau + j];
            }
            if self.config.use_covariates {
                x[(j, days)] = cond.temperature[j];
                x[(j, days + 1)] = cond.humidity[j];
            }
        }
        x
    }

    /// Condition encoder: time-aligned temporal channels through an LSTM,
    /// static features as one extra token, self-attention fusion.
    pub fn encode_condition(&self, cond: &ConditionSet) -> Result<(Array2<f64>, CondCache)> {
        cond.validate(self.config.history_steps, self.config.horizon)?;
        let cond_in = self.cond_input(cond);
        let (mut hidden, lstm_cache) = self.cond_lstm.forward(&cond_in)?;
        hidden += &self.positional_basis(hidden.dim().0);
        let (tokens, static_in) = if let Some(static_linear) = &self.static_linear {
            let mut si = Array2::zeros((1, 8));
            for (i, &v) in cond.day_onehot.iter().enumerate() {
                si[(0, i)] = v;
            }
            si[(0, 7)] = cond.ev_count;
            let tok = static_linear.forward(&si)?;
            let mut tokens = Array2::zeros((hidden.dim().0 + 1, hidden.dim().1));
            tokens.slice_mut(s![..hidden.dim().0, ..]).assign(&hidden);
            tokens.slice_mut(s![hidden.dim().0.., ..]).assign(&tok);
            (tokens, Some(si))
        } else {
            (hidden, None)
        };
        let (latent, attn_cache) = self.cond_attn.forward(&tokens, &tokens)?;
        Ok((
            latent.clone(),
            CondCache { cond_in, lstm: lstm_cache, static_in, attn: attn_cache, latent },
        ))
    }

    /// Full forward pass: predicted noise plus the cache for `backward`.
    pub fn predict_noise(
        &self,
        x_t: &[f64],
        cond: &ConditionSet,
        t: usize,
        t_max: usize,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_step(t, t_max)?;
        let (pert_latent, pc) = self.encode_perturbation(x_t, t)?;
        let (cond_latent, cc) = self.encode_condition(cond)?;

        let (head_in, cross_cache) = match (&self.cross_attn, self.config.conditioning) {
            (Some(cross), Conditioning::CrossAttention) => {
                let (out, cache) = cross.forward(&cond_latent, &pert_latent)?;
                (out, Some(cache))
            }
            (None, Conditioning::LatentFusion) => {
                let tau = self.config.horizon;
                let mut blended = pert_latent.clone();
                blended += &cond_latent.slice(s![..tau, ..]);
                if cond_latent.dim().0 > tau {
                    let static_row = cond_latent.row(tau).insert_axis(Axis(0)).to_owned();
                    blended += &static_row;
                }
                (blended, None)
            }
            _ => return Err(Error::Model("conditioning mode and parameters disagree".into())),
        };

        let (head_latent, head_cache) = self.head_attn.forward(&head_in, &head_in)?;
        let tokens = head_latent.dim().0;
        let width = head_latent.dim().1;
        let flat = head_latent.into_shape_with_order((1, tokens * width)).expect("contiguous");
        let out = self.head_out.forward(&flat)?;
        let eps_hat: Vec<f64> = out.row(0).to_vec();
        if !eps_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::Model(format!("non-finite denoiser output at step {t}")));
        }
        Ok((
            eps_hat,
            ForwardCache {
                pert_lstm: pc.lstm,
                step_basis: pc.step_basis,
                pert_attn: pc.attn,
                cond_in: cc.cond_in,
                cond_lstm: cc.lstm,
                static_in: cc.static_in,
                cond_attn: cc.attn,
                cond_latent: cc.latent,
                cross: cross_cache,
                head_in,
                head_attn: head_cache,
                flat,
            },
        ))
    }

    /// Forward without keeping the cache; used by samplers.
    pub fn predict_noise_only(
        &self,
        x_t: &[f64],
        cond: &ConditionSet,
        t: usize,
        t_max: usize,
    ) -> Result<Vec<f64>> {
        Ok(self.predict_noise(x_t, cond, t, t_max)?.0)
    }

    /// Accumulates parameter gradients for dL/d(eps_hat) = `grad_eps`.
    pub fn backward(&mut self, cache: &ForwardCache, grad_eps: &[f64]) -> Result<()> {
        let tau = self.config.horizon;
        if grad_eps.len() != tau {
            return Err(Error::Config("gradient length does not match horizon".into()));
        }
        let grad_out = Array2::from_shape_fn((1, tau), |(_, j)| grad_eps[j]);
        let d_flat = self.head_out.backward(&cache.flat, &grad_out);
        let tokens = cache.head_in.dim().0;
        let width = cache.head_in.dim().1;
        let d_head_latent = d_flat.into_shape_with_order((tokens, width)).expect("contiguous");
        let (dq, dkv) = self.head_attn.backward(&cache.head_attn, &d_head_latent);
        let d_head_in = dq + dkv;

        let (d_cond_latent, d_pert_latent) = match (&mut self.cross_attn, self.config.conditioning) {
            (Some(cross), Conditioning::CrossAttention) => {
                let (dq, dkv) = cross.backward(cache.cross.as_ref().expect("cross cache"), &d_head_in);
                (dq, dkv)
            }
            (None, Conditioning::LatentFusion) => {
                let mut d_cond = Array2::zeros(cache.cond_latent.raw_dim());
                d_cond.slice_mut(s![..tau, ..]).assign(&d_head_in);
                if cache.cond_latent.dim().0 > tau {
                    let summed = d_head_in.sum_axis(Axis(0));
                    d_cond.slice_mut(s![tau.., ..]).assign(&summed.insert_axis(Axis(0)));
                }
                (d_cond, d_head_in)
            }
            _ => return Err(Error::Model("conditioning mode and parameters disagree".into())),
        };

        // Condition branch.
        let (dq, dkv) = self.cond_attn.backward(&cache.cond_attn, &d_cond_latent);
        let d_cond_tokens = dq + dkv;
        let n_temporal = cache.cond_in.dim().0;
        if let (Some(static_linear), Some(static_in)) = (&mut self.static_linear, &cache.static_in) {
            let d_static = d_cond_tokens.slice(s![n_temporal.., ..]).to_owned();
            static_linear.backward(static_in, &d_static);
        }
        let d_cond_hidden = d_cond_tokens.slice(s![..n_temporal, ..]).to_owned();
        self.cond_lstm.backward(&cache.cond_lstm, &d_cond_hidden);

        // Perturbation branch.
        let (dq, dkv) = self.pert_attn.backward(&cache.pert_attn, &d_pert_latent);
        let d_pert_tokens = dq + dkv;
        let d_step = d_pert_tokens.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.step_embed.backward(&cache.step_basis, &d_step);
        self.pert_lstm.backward(&cache.pert_lstm, &d_pert_tokens);
        Ok(())
    }

    pub fn params_of(&self, component: Component) -> Vec<&ParamTensor> {
        match component {
            Component::PerturbationEncoder => {
                let mut v = self.pert_lstm.params();
                v.extend(self.step_embed.params());
                v.extend(self.pert_attn.params());
                v
            }
            Component::ConditionEncoder => {
                let mut v = self.cond_lstm.params();
                if let Some(l) = &self.static_linear {
                    v.extend(l.params());
                }
                v.extend(self.cond_attn.params());
                v
            }
            Component::CrossAttention => self.cross_attn.as_ref().map(|c| c.params()).unwrap_or_default(),
            Component::ForecastHead => {
                let mut v = self.head_attn.params();
                v.extend(self.head_out.params());
                v
            }
        }
    }

    pub fn params_of_mut(&mut self, component: Component) -> Vec<&mut ParamTensor> {
        match component {
            Component::PerturbationEncoder => {
                let mut v = self.pert_lstm.params_mut();
                v.extend(self.step_embed.params_mut());
                v.extend(self.pert_attn.params_mut());
                v
            }
            Component::ConditionEncoder => {
                let mut v = self.cond_lstm.params_mut();
                if let Some(l) = &mut self.static_linear {
                    v.extend(l.params_mut());
                }
                v.extend(self.cond_attn.params_mut());
                v
            }
            Component::CrossAttention => {
                self.cross_attn.as_mut().map(|c| c.params_mut()).unwrap_or_default()
            }
            Component::ForecastHead => {
                let mut v = self.head_attn.params_mut();
                v.extend(self.head_out.params_mut());
                v
            }
        }
    }

    pub fn all_params(&self) -> Vec<&ParamTensor> {
        Component::ALL.iter().flat_map(|c| self.params_of(*c)).collect()
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = self.pert_lstm.params_mut();
        v.extend(self.step_embed.params_mut());
        v.extend(self.pert_attn.params_mut());
        v.extend(self.cond_lstm.params_mut());
        if let Some(l) = &mut self.static_linear {
            v.extend(l.params_mut());
        }
        v.extend(self.cond_attn.params_mut());
        if let Some(c) = &mut self.cross_attn {
            v.extend(c.params_mut());
        }
        v.extend(self.head_attn.params_mut());
        v.extend(self.head_out.params_mut());
        v
    }

    /// Selected components' parameters for the optimizer. Components are
    /// identified by the name prefix every parameter carries.
    pub fn params_of_components_mut(&mut self, components: &[Component]) -> Vec<&mut ParamTensor> {
        let prefixes: Vec<&'static str> = components.iter().map(|c| c.name_prefix()).collect();
        self.all_params_mut()
            .into_iter()
            .filter(|p| prefixes.iter().any(|pre| p.name().starts_with(pre)))
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.all_params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.all_params().iter().map(|p| p.len()).sum()
    }
}

#[derive(Debug)]
pub struct PertCache {
    lstm: LstmCache,
    step_basis: Array2<f64>,
    attn: BlockCache,
}

#[derive(Debug)]
pub struct CondCache {
    cond_in: Array2<f64>,
    lstm: LstmCache,
    static_in: Option<Array2<f64>>,
    attn: BlockCache,
    latent: Array2<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            horizon: 6,
            history_steps: 12,
            hidden_dim: 8,
            head_count: 2,
            use_covariates: true,
            conditioning: Conditioning::CrossAttention,
        }
    }

    fn tiny_condition(cfg: &ModelConfig) -> ConditionSet {
        let mut day = [0.0; 7];
        day[2] = 1.0;
        ConditionSet {
            history: (0..cfg.history_steps).map(|i| (i as f64 * 0.37).sin()).collect(),
            temperature: (0..cfg.horizon).map(|i| 0.1 * i as f64 - 0.3).collect(),
            humidity: (0..cfg.horizon).map(|i| -0.05 * i as f64 + 0.2).collect(),
            day_onehot: day,
            ev_count: 0.4,
        }
    }

    fn tiny_xt(cfg: &ModelConfig) -> Vec<f64> {
        (0..cfg.horizon).map(|i| ((i * 7 + 3) as f64 * 0.11).cos()).collect()
    }

    #[test]
    fn step_embedding_is_deterministic_and_distinguishes_steps() {
        let model = DenoiserParams::new(tiny_config(), 1).unwrap();
        let a = model.embed_step(1).unwrap();
        let b = model.embed_step(1).unwrap();
        let c = model.embed_step(50).unwrap();
        assert_eq!(a, b);
        let diff = (&a - &c).mapv(f64::abs).sum();
        assert!(diff > 0.0);
    }

    #[test]
    fn zero_step_embed_weights_give_bias_embedding() {
        let cfg = tiny_config();
        let mut model = DenoiserParams::new(cfg, 2).unwrap();
        for p in model.step_embed.params_mut() {
            if p.name().ends_with(".w") {
                p.values_mut().fill(0.0);
            }
        }
        let e1 = model.embed_step(3).unwrap();
        let e2 = model.embed_step(47).unwrap();
        assert_eq!(e1, e2);
        let bias = model.step_embed.params()[1].values().clone();
        assert_eq!(e1, bias);
    }

    #[test]
    fn encoder_and_output_shapes() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 3).unwrap();
        let cond = tiny_condition(&cfg);
        let x_t = tiny_xt(&cfg);
        let (pert, _) = model.encode_perturbation(&x_t, 4).unwrap();
        assert_eq!(pert.dim(), (cfg.horizon, cfg.hidden_dim));
        let (cl, _) = model.encode_condition(&cond).unwrap();
        assert_eq!(cl.dim(), (cfg.horizon + 1, cfg.hidden_dim));
        let (eps, _) = model.predict_noise(&x_t, &cond, 4, 50).unwrap();
        assert_eq!(eps.len(), cfg.horizon);
    }

    #[test]
    fn step_awareness_and_input_sensitivity() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 4).unwrap();
        let cond = tiny_condition(&cfg);
        let x_t = tiny_xt(&cfg);
        let (a, _) = model.encode_perturbation(&x_t, 1).unwrap();
        let (b, _) = model.encode_perturbation(&x_t, 40).unwrap();
        assert!((&a - &b).mapv(f64::abs).sum() > 1e-9);

        let (e1, _) = model.predict_noise(&x_t, &cond, 5, 50).unwrap();
        let mut x2 = x_t.clone();
        x2[0] += 0.5;
        let (e2, _) = model.predict_noise(&x2, &cond, 5, 50).unwrap();
        let diff: f64 = e1.iter().zip(&e2).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn condition_sensitivity_to_static_features() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 5).unwrap();
        let cond = tiny_condition(&cfg);
        let (a, _) = model.encode_condition(&cond).unwrap();
        let mut cond2 = cond.clone();
        cond2.ev_count = 1.4;
        let (b, _) = model.encode_condition(&cond2).unwrap();
        assert!((&a - &b).mapv(f64::abs).sum() > 1e-9);
    }

    #[test]
    fn permuting_day_onehot_changes_prediction() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 6).unwrap();
        let cond = tiny_condition(&cfg);
        let x_t = tiny_xt(&cfg);
        let (e1, _) = model.predict_noise(&x_t, &cond, 3, 50).unwrap();
        let mut cond2 = cond.clone();
        cond2.day_onehot = [0.0; 7];
        cond2.day_onehot[6] = 1.0;
        let (e2, _) = model.predict_noise(&x_t, &cond2, 3, 50).unwrap();
        let diff: f64 = e1.iter().zip(&e2).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-12);
    }

    #[test]
    fn weather_length_mismatch_is_data_error() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 7).unwrap();
        let mut cond = tiny_condition(&cfg);
        cond.temperature.pop();
        let err = model.encode_condition(&cond).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn perturbation_encoder_matches_composition_oracle() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 8).unwrap();
        let x_t = tiny_xt(&cfg);
        let (latent, _) = model.encode_perturbation(&x_t, 9).unwrap();

        // Composition of the public sub-layers.
        let x_seq = Array2::from_shape_fn((cfg.horizon, 1), |(i, _)| x_t[i]);
        let (hidden, _) = model.pert_lstm.forward(&x_seq).unwrap();
        let emb = model.embed_step(9).unwrap();
        let tokens = &hidden + &emb + &model.positional_basis(cfg.horizon);
        let (expected, _) = model.pert_attn.forward(&tokens, &tokens).unwrap();
        assert_eq!(latent, expected);
    }

    #[test]
    fn condition_encoder_matches_composition_oracle() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 9).unwrap();
        let cond = tiny_condition(&cfg);
        let (latent, _) = model.encode_condition(&cond).unwrap();

        let cond_in = model.cond_input(&cond);
        let (mut hidden, _) = model.cond_lstm.forward(&cond_in).unwrap();
        hidden += &model.positional_basis(cfg.horizon);
        let mut si = Array2::zeros((1, 8));
        for (i, &v) in cond.day_onehot.iter().enumerate() {
            si[(0, i)] = v;
        }
        si[(0, 7)] = cond.ev_count;
        let tok = model.static_linear.as_ref().unwrap().forward(&si).unwrap();
        let mut tokens = Array2::zeros((cfg.horizon + 1, cfg.hidden_dim));
        tokens.slice_mut(s![..cfg.horizon, ..]).assign(&hidden);
        tokens.slice_mut(s![cfg.horizon.., ..]).assign(&tok);
        let (expected, _) = model.cond_attn.forward(&tokens, &tokens).unwrap();
        assert_eq!(latent, expected);
    }

    #[test]
    fn parameter_partition_is_disjoint_and_covers_everything() {
        let model = DenoiserParams::new(tiny_config(), 10).unwrap();
        let mut seen = HashSet::new();
        let mut total = 0usize;
        for c in Component::ALL {
            for p in model.params_of(c) {
                assert!(seen.insert(p.name().to_string()), "duplicate param {}", p.name());
                total += 1;
            }
        }
        assert_eq!(total, model.all_params().len());
    }

    #[test]
    fn serialization_round_trip_is_bit_identical() {
        let cfg = tiny_config();
        let model = DenoiserParams::new(cfg, 11).unwrap();
        let cond = tiny_condition(&cfg);
        let x_t = tiny_xt(&cfg);
        let (before, _) = model.predict_noise(&x_t, &cond, 7, 50).unwrap();

        let json = serde_json::to_string(&model).unwrap();
        let restored: DenoiserParams = serde_json::from_str(&json).unwrap();
        let (after, _) = restored.predict_noise(&x_t, &cond, 7, 50).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn latent_fusion_variant_runs_and_differs() {
        let mut cfg = tiny_config();
        let cond = tiny_condition(&cfg);
        let x_t = tiny_xt(&cfg);
        let cross = DenoiserParams::new(cfg, 12).unwrap();
        cfg.conditioning = Conditioning::LatentFusion;
        let fused = DenoiserParams::new(cfg, 12).unwrap();
        let (a, _) = cross.predict_noise(&x_t, &cond, 2, 50).unwrap();
        let (b, _) = fused.predict_noise(&x_t, &cond, 2, 50).unwrap();
        assert_eq!(a.len(), b.len());
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-9);
        assert!(fused.params_of(Component::CrossAttention).is_empty());
    }

    #[test]
    fn backward_matches_finite_differences_on_random_coordinates() {
        let cfg = tiny_config();
        let mut model = DenoiserParams::new(cfg, 13).unwrap();
        let cond = tiny_condition(&cfg);
        let x_t = tiny_xt(&cfg);
        let target: Vec<f64> = (0..cfg.horizon).map(|i| 0.3 * (i as f64).sin()).collect();

        // Loss: || eps_hat - target ||^2.
        let loss = |m: &DenoiserParams| -> f64 {
            let (eps, _) = m.predict_noise(&x_t, &cond, 11, 50).unwrap();
            eps.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let (eps, cache) = model.predict_noise(&x_t, &cond, 11, 50).unwrap();
        let grad: Vec<f64> = eps.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        model.backward(&cache, &grad).unwrap();

        let h = 1e-5;
        let mut rng = substream_rng(99, 0);
        let n_params = model.all_params().len();
        for _ in 0..30 {
            let p_idx = rng.random_range(0..n_params);
            let len = model.all_params()[p_idx].len();
            let c_idx = rng.random_range(0..len);
            let analytic = model.all_params()[p_idx].grad_at(c_idx);
            model.all_params_mut()[p_idx].nudge_at(c_idx, h);
            let up = loss(&model);
            model.all_params_mut()[p_idx].nudge_at(c_idx, -2.0 * h);
            let dn = loss(&model);
            model.all_params_mut()[p_idx].nudge_at(c_idx, h);
            let fd = (up - dn) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-4);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "param {p_idx} coord {c_idx}: analytic {analytic} vs fd {fd}"
            );
        }
    }
}
