//! Per-channel z-score normalization with statistics from the training split.

use serde::{Deserialize, Serialize};

use super::windows::ForecastWindow;
use crate::denoiser::ConditionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    fn fit(name: &str, values: impl Iterator<Item = f64>) -> Result<Self> {
        let values: Vec<f64> = values.collect();
        if values.is_empty() {
            return Err(Error::Config(format!("cannot fit {name} stats on empty data")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::Config(format!(
                "channel '{name}' is constant (std = 0); cannot z-score"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Load, temperature, humidity and EV-count statistics. Load statistics are
/// shared by the history and target channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub load: ChannelStats,
    pub temperature: ChannelStats,
    pub humidity: ChannelStats,
    pub ev_count: ChannelStats,
}

/// A window in normalized model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedWindow {
    pub id: u64,
    pub condition: ConditionSet,
    pub target: Vec<f64>,
}

impl NormalizationStats {
    /// Statistics must come from the training split only.
    pub fn fit(train_windows: &[ForecastWindow]) -> Result<Self> {
        Ok(Self {
            load: ChannelStats::fit(
                "load",
                train_windows
                    .iter()
                    .flat_map(|w| w.history.iter().chain(w.target.iter()).copied()),
            )?,
            temperature: ChannelStats::fit(
                "temperature",
                train_windows.iter().flat_map(|w| w.temperature.iter().copied()),
            )?,
            humidity: ChannelStats::fit(
                "humidity",
                train_windows.iter().flat_map(|w| w.humidity.iter().copied()),
            )?,
            ev_count: ChannelStats::fit("ev_count", train_windows.iter().map(|w| w.ev_count))?,
        })
    }

    pub fn normalize_window(&self, w: &ForecastWindow) -> NormalizedWindow {
        NormalizedWindow {
            id: w.id,
            condition: self.normalize_condition(w),
            target: w.target.iter().map(|&v| self.load.normalize(v)).collect(),
        }
    }

    pub fn normalize_condition(&self, w: &ForecastWindow) -> ConditionSet {
        ConditionSet {
            history: w.history.iter().map(|&v| self.load.normalize(v)).collect(),
            temperature: w.temperature.iter().map(|&v| self.temperature.normalize(v)).collect(),
            humidity: w.humidity.iter().map(|&v| self.humidity.normalize(v)).collect(),
            day_onehot: w.day_onehot,
            ev_count: self.ev_count.normalize(w.ev_count),
        }
    }

    pub fn normalize_load(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.load.normalize(v)).collect()
    }

    pub fn denormalize_load(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.load.denormalize(v)).collect()
    }

    /// Physical kW with the 0 kW floor applied; use when emitting forecasts.
    pub fn denormalize_load_clamped(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.load.denormalize(v).max(0.0)).collect()
    }
}
