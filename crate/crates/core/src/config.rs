//! Run configuration: one TOML file drives every command. Unknown keys are
//! rejected; every section falls back to the paper-scale defaults.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::synthetic::SyntheticConfig;
use crate::data::WindowConfig;
use crate::denoiser::{Conditioning, ModelConfig};
use crate::diffusion::{SamplerConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::schedule::ScheduleConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub sessions_csv: PathBuf,
    pub weather_csv: PathBuf,
    /// Temporal split boundary: training windows end before it, test windows
    /// (history included) start at or after it.
    pub split_date: NaiveDate,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            sessions_csv: PathBuf::from("sessions.csv"),
            weather_csv: PathBuf::from("weather.csv"),
            split_date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub head_count: usize,
    pub use_covariates: bool,
    pub conditioning: Conditioning,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            head_count: 4,
            use_covariates: true,
            conditioning: Conditioning::CrossAttention,
            init_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub window: WindowConfig,
    pub schedule: ScheduleConfig,
    pub model: ModelSection,
    pub training: TrainingConfig,
    pub sampler: SamplerConfig,
    pub synthetic: SyntheticConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.model_config().validate()?;
        self.training.validate()?;
        self.sampler.validate(self.window.horizon_steps)?;
        if self.schedule.steps < 2
            || !(self.schedule.beta_start > 0.0 && self.schedule.beta_start < self.schedule.beta_end && self.schedule.beta_end < 1.0)
        {
            return Err(Error::Config("invalid schedule section".into()));
        }
        Ok(())
    }

    /// Network shape assembled from the window and model sections.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            horizon: self.window.horizon_steps,
            history_steps: self.window.history_steps,
            hidden_dim: self.model.hidden_dim,
            head_count: self.model.head_count,
            use_covariates: self.model.use_covariates,
            conditioning: self.model.conditioning,
        }
    }

    /// Single-line JSON of the effective configuration (after defaults);
    /// embedded in artifacts and reports.
    pub fn effective_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.window.history_steps, 480);
        assert_eq!(cfg.window.horizon_steps, 96);
        assert_eq!(cfg.schedule.steps, 200);
        assert_eq!(cfg.schedule.beta_start, 1e-4);
        assert_eq!(cfg.schedule.beta_end, 0.5);
        assert_eq!(cfg.model.hidden_dim, 32);
        assert_eq!(cfg.model.head_count, 4);
        assert_eq!(cfg.training.pretrain_lr, 0.001);
        assert_eq!(cfg.training.finetune_lr, 0.0002);
        assert_eq!(cfg.training.pretrain_epochs, 200);
        assert_eq!(cfg.training.finetune_epochs, 100);
        assert_eq!(cfg.training.batch_size, 16);
        assert_eq!(cfg.training.qdm_weight, 0.001);
        assert_eq!(cfg.sampler.ensemble_size, 1000);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[window]\nhistory_steps = 48\nhorizon_steps = 24\nresolution_min = 60\nbogus = 1\n").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("bogus") || err.to_string().contains("unknown"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.toml");
        std::fs::write(
            &path,
            "[schedule]\nsteps = 50\nbeta_start = 0.0001\nbeta_end = 0.5\n\n[window]\nhistory_steps = 48\nhorizon_steps = 24\nresolution_min = 60\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.schedule.steps, 50);
        assert_eq!(cfg.model.hidden_dim, 32);
        assert_eq!(cfg.window.horizon_steps, 24);
    }

    #[test]
    fn effective_json_round_trips() {
        let cfg = RunConfig::default();
        let json = cfg.effective_json();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn mismatched_window_and_horizon_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.window.history_steps = 100; // not a multiple of 96
        assert!(cfg.validate().is_err());
    }
}
