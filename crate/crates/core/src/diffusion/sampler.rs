//! Ancestral sampling of forecast ensembles with optional observed-prefix
//! pinning for variable prediction horizons.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::{forward_perturb, reverse_step};
use crate::data::NormalizationStats;
use crate::denoiser::{ConditionSet, DenoiserParams};
use crate::error::{Error, Result};
use crate::eval::ForecastEnsemble;
use crate::nn::init::substream_rng;
use crate::schedule::NoiseSchedule;

/// Anything that predicts the injected noise; implemented by the trained
/// denoiser and by test stubs.
pub trait NoisePredictor: Sync {
    fn predict(&self, x_t: &[f64], cond: &ConditionSet, t: usize, t_max: usize) -> Result<Vec<f64>>;
}

impl NoisePredictor for DenoiserParams {
    fn predict(&self, x_t: &[f64], cond: &ConditionSet, t: usize, t_max: usize) -> Result<Vec<f64>> {
        self.predict_noise_only(x_t, cond, t, t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub ensemble_size: usize,
    pub seed: u64,
    /// Observed prefix length eta: the first eta horizon steps are known and
    /// pinned during sampling.
    pub observed_prefix: usize,
    pub parallel: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { ensemble_size: 1000, seed: 7, observed_prefix: 0, parallel: true }
    }
}

impl SamplerConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        if self.observed_prefix >= horizon {
            return Err(Error::Config(format!(
                "observed prefix {} must be shorter than the horizon {horizon}",
                self.observed_prefix
            )));
        }
        Ok(())
    }
}

/// Draw order within one trajectory substream: initial x_T first, then per
/// reverse step the prefix-pinning noise (when eta > 0) followed by z. Fixed
/// so parallel and sequential execution are bit-identical.
fn sample_one<P: NoisePredictor>(
    predictor: &P,
    cond: &ConditionSet,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    observed_norm: Option<&[f64]>,
    horizon: usize,
    trajectory: u64,
) -> Result<Vec<f64>> {
    let t_max = sched.steps();
    let eta = cfg.observed_prefix;
    let mut rng = substream_rng(cfg.seed, trajectory);
    let mut x: Vec<f64> = (0..horizon).map(|_| rng.sample(StandardNormal)).collect();
    for t in (1..=t_max).rev() {
        if eta > 0 {
            let observed = observed_norm
                .ok_or_else(|| Error::Config("observed prefix requested without observations".into()))?;
            let eps_pin: Vec<f64> = (0..eta).map(|_| rng.sample(StandardNormal)).collect();
            let pinned = forward_perturb(&observed[..eta], t, &eps_pin, sched)?;
            x[..eta].copy_from_slice(&pinned);
        }
        let eps_hat = predictor.predict(&x, cond, t, t_max)?;
        let z: Vec<f64> = if t > 1 {
            (0..horizon).map(|_| rng.sample(StandardNormal)).collect()
        } else {
            vec![0.0; horizon]
        };
        x = reverse_step(&x, t, &eps_hat, &z, sched)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Sampling {
                step: t,
                message: format!("trajectory {trajectory} became non-finite"),
            });
        }
    }
    if eta > 0 {
        x[..eta].copy_from_slice(&observed_norm.expect("checked above")[..eta]);
    }
    Ok(x)
}

/// N trajectories in normalized units. Each trajectory runs on its own
/// seed-derived substream, so the parallel and sequential paths produce
/// identical output.
pub fn sample_trajectories<P: NoisePredictor>(
    predictor: &P,
    cond: &ConditionSet,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    observed_norm: Option<&[f64]>,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate(horizon)?;
    if cfg.parallel {
        (0..cfg.ensemble_size as u64)
            .into_par_iter()
            .map(|n| sample_one(predictor, cond, sched, cfg, observed_norm, horizon, n))
            .collect()
    } else {
        (0..cfg.ensemble_size as u64)
            .map(|n| sample_one(predictor, cond, sched, cfg, observed_norm, horizon, n))
            .collect()
    }
}

/// Full-service ensemble generation for one forecast window: samples in
/// normalized space, denormalizes to kW with the 0 kW floor, pins the
/// observed prefix to the measured values and derives the quantile tracks.
pub fn sample_ensemble<P: NoisePredictor>(
    predictor: &P,
    cond: &ConditionSet,
    stats: &NormalizationStats,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    observed_kw: Option<&[f64]>,
) -> Result<ForecastEnsemble> {
    let horizon = cond.temperature.len();
    let observed_norm = observed_kw.map(|o| stats.normalize_load(o));
    let trajectories = sample_trajectories(
        predictor,
        cond,
        sched,
        cfg,
        observed_norm.as_deref(),
        horizon,
    )?;
    let eta = cfg.observed_prefix;
    let physical: Vec<Vec<f64>> = trajectories
        .into_iter()
        .map(|t| {
            let mut kw = stats.denormalize_load_clamped(&t);
            if eta > 0 {
                kw[..eta].copy_from_slice(&observed_kw.expect("validated")[..eta]);
            }
            kw
        })
        .collect();
    ForecastEnsemble::from_trajectories(physical)
}
