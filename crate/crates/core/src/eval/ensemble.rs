//! Forecast ensembles and their derived quantile tracks.

use serde::{Deserialize, Serialize};

use super::metrics::quantile;
use crate::error::{Error, Result};

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// N sampled trajectories plus the per-step quantile tracks at the standard
/// levels. The median track doubles as the point forecast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastEnsemble {
    /// N x tau trajectories in kW.
    pub trajectories: Vec<Vec<f64>>,
    pub quantile_levels: Vec<f64>,
    /// levels x tau.
    pub quantile_tracks: Vec<Vec<f64>>,
    pub median: Vec<f64>,
}

impl ForecastEnsemble {
    pub fn from_trajectories(trajectories: Vec<Vec<f64>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Domain("ensemble needs at least one trajectory".into()));
        }
        let tau = trajectories[0].len();
        if trajectories.iter().any(|t| t.len() != tau) {
            return Err(Error::Data("ragged ensemble trajectories".into()));
        }
        let mut tracks = vec![vec![0.0; tau]; QUANTILE_LEVELS.len()];
        let mut column = vec![0.0; trajectories.len()];
        for j in 0..tau {
            for (n, t) in trajectories.iter().enumerate() {
                column[n] = t[j];
            }
            for (li, &q) in QUANTILE_LEVELS.iter().enumerate() {
                tracks[li][j] = quantile(&column, q)?;
            }
        }
        let median = tracks[2].clone();
        Ok(Self {
            trajectories,
            quantile_levels: QUANTILE_LEVELS.to_vec(),
            quantile_tracks: tracks,
            median,
        })
    }

    pub fn horizon(&self) -> usize {
        self.median.len()
    }

    pub fn size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn track(&self, level: f64) -> Option<&[f64]> {
        self.quantile_levels
            .iter()
            .position(|&q| (q - level).abs() < 1e-12)
            .map(|i| self.quantile_tracks[i].as_slice())
    }

    /// Running cumulative energy of the median forecast in kWh.
    pub fn cumulative_energy(&self, resolution_min: u32) -> Vec<f64> {
        cumulative_energy(&self.median, resolution_min)
    }
}

/// kW profile to running kWh (kW x bin hours, accumulated).
pub fn cumulative_energy(profile: &[f64], resolution_min: u32) -> Vec<f64> {
    let hours = resolution_min as f64 / 60.0;
    let mut total = 0.0;
    profile
        .iter()
        .map(|&p| {
            total += p * hours;
            total
        })
        .collect()
}
