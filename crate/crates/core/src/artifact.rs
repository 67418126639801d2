//! Versioned model artifact: parameters, schedule and window configuration,
//! normalization statistics and the effective run config, in one JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::NormalizationStats;
use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub config: RunConfig,
    pub stats: NormalizationStats,
    pub model: DenoiserParams,
}

impl ModelArtifact {
    pub fn new(config: RunConfig, stats: NormalizationStats, model: DenoiserParams) -> Self {
        Self { version: ARTIFACT_VERSION, config, stats, model }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Model(format!("cannot read artifact {}: {e}", path.display())))?;
        let artifact: ModelArtifact = serde_json::from_str(&text)
            .map_err(|e| Error::Model(format!("artifact {}: {e}", path.display())))?;
        artifact.validate()?;
        Ok(artifact)
    }

    /// Version and shape-manifest checks.
    pub fn validate(&self) -> Result<()> {
        if self.version != ARTIFACT_VERSION {
            return Err(Error::Model(format!(
                "artifact version {} does not match supported version {ARTIFACT_VERSION}",
                self.version
            )));
        }
        let expected = self.config.model_config();
        if *self.model.config() != expected {
            return Err(Error::Model(
                "artifact model shape does not match its embedded config".into(),
            ));
        }
        for p in self.model.all_params() {
            p.check_finite().map_err(|e| Error::Model(e.to_string()))?;
        }
        Ok(())
    }

    /// The persisted diffusion schedule, rebuilt from its stored parameters.
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::from_config(&self.config.schedule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::windows::weekday_onehot;
    use crate::data::ForecastWindow;

    fn small_artifact() -> ModelArtifact {
        let mut config = RunConfig::default();
        config.window.history_steps = 12;
        config.window.horizon_steps = 6;
        config.window.resolution_min = 60;
        config.model.hidden_dim = 8;
        config.model.head_count = 2;
        config.schedule.steps = 10;
        let model = DenoiserParams::new(config.model_config(), 3).unwrap();
        let anchor = chrono::NaiveDate::from_ymd_opt(2018, 1, 8)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let windows: Vec<ForecastWindow> = (0..3)
            .map(|k| ForecastWindow {
                id: k,
                anchor,
                history: (0..12).map(|i| (i + k as usize) as f64).collect(),
                target: (0..6).map(|i| (2 * i + k as usize) as f64).collect(),
                temperature: (0..6).map(|i| 10.0 + i as f64 + k as f64).collect(),
                humidity: (0..6).map(|i| 50.0 + i as f64 + k as f64).collect(),
                day_onehot: weekday_onehot(anchor.date()),
                ev_count: 30.0 + k as f64,
            })
            .collect();
        let stats = NormalizationStats::fit(&windows).unwrap();
        ModelArtifact::new(config, stats, model)
    }

    #[test]
    fn save_load_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let artifact = small_artifact();
        artifact.save(&path).unwrap();
        let loaded = ModelArtifact::load(&path).unwrap();

        let mut day = [0.0; 7];
        day[0] = 1.0;
        let cond = crate::denoiser::ConditionSet {
            history: (0..12).map(|i| 0.1 * i as f64).collect(),
            temperature: vec![0.0; 6],
            humidity: vec![0.0; 6],
            day_onehot: day,
            ev_count: 0.5,
        };
        let x_t = vec![0.3; 6];
        let a = artifact.model.predict_noise_only(&x_t, &cond, 4, 10).unwrap();
        let b = loaded.model.predict_noise_only(&x_t, &cond, 4, 10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut artifact = small_artifact();
        artifact.version = 99;
        let json = serde_json::to_string(&artifact).unwrap();
        std::fs::write(&path, json).unwrap();
        let err = ModelArtifact::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut artifact = small_artifact();
        artifact.config.model.hidden_dim = 16; // manifest no longer matches
        let json = serde_json::to_string(&artifact).unwrap();
        std::fs::write(&path, json).unwrap();
        let err = ModelArtifact::load(&path).unwrap_err();
        assert!(err.to_string().contains("shape"));
    }
}
