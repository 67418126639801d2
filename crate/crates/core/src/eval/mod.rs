//! Forecast evaluation: quantiles, MAE, CRPS, interval coverage/width, the
//! pinball-trained quantile-regression baseline and report emission.

pub mod baseline;
pub mod ensemble;
pub mod metrics;
pub mod plot;
pub mod report;

pub use baseline::{climatology, crossing_rate, BaselineConfig, QuantileBaseline};
pub use ensemble::{cumulative_energy, ForecastEnsemble, QUANTILE_LEVELS};
pub use metrics::{coverage_and_width, crps, crps_from_quantiles, crps_profile, mae, pinball_loss, quantile};
pub use plot::render_band_svg;
pub use report::{AggregateRow, EvalReport, SampleRow};

use crate::error::Result;

/// Standard per-sample scores of an ensemble forecast against the truth.
#[derive(Debug, Clone, Copy)]
pub struct SampleScores {
    pub mae: f64,
    pub crps: f64,
    pub coverage_50: f64,
    pub coverage_90: f64,
    pub width_90: f64,
}

pub fn score_ensemble(ensemble: &ForecastEnsemble, truth: &[f64]) -> Result<SampleScores> {
    let (coverage_50, _) = coverage_and_width(&ensemble.trajectories, truth, 0.5)?;
    let (coverage_90, width_90) = coverage_and_width(&ensemble.trajectories, truth, 0.9)?;
    Ok(SampleScores {
        mae: mae(&ensemble.median, truth)?,
        crps: crps_profile(&ensemble.trajectories, truth)?,
        coverage_50,
        coverage_90,
        width_90,
    })
}
