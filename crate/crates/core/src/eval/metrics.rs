//! Point and probabilistic forecast metrics.

use crate::error::{Error, Result};

/// Order-statistic quantile with linear interpolation between adjacent ranks.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Mean absolute error between the ensemble median and the truth, in kW.
pub fn mae(median: &[f64], truth: &[f64]) -> Result<f64> {
    if median.len() != truth.len() {
        return Err(Error::Domain(format!(
            "mae length mismatch: {} vs {}",
            median.len(),
            truth.len()
        )));
    }
    Ok(median
        .iter()
        .zip(truth)
        .map(|(m, x)| (m - x).abs())
        .sum::<f64>()
        / median.len() as f64)
}

/// Empirical-CDF CRPS in the energy form:
/// mean|X_i - y| - 1/(2N^2) sum_ij |X_i - X_j|.
pub fn crps(ensemble: &[f64], y: f64) -> Result<f64> {
    let n = ensemble.len();
    if n == 0 {
        return Err(Error::Domain("crps of an empty ensemble".into()));
    }
    let term1 = ensemble.iter().map(|x| (x - y).abs()).sum::<f64>() / n as f64;
    // Pairwise term via the sorted-order identity:
    // sum_ij |x_i - x_j| = 2 * sum_k (2k + 1 - N) x_(k).
    let mut sorted = ensemble.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite ensemble"));
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 + 1.0 - n as f64) * x)
        .sum::<f64>()
        * 2.0;
    Ok(term1 - pair_sum / (2.0 * (n * n) as f64))
}

/// Per-step CRPS averaged over the horizon.
pub fn crps_profile(trajectories: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::Domain("crps of an empty ensemble".into()));
    }
    let tau = truth.len();
    let mut total = 0.0;
    let mut column = vec![0.0; trajectories.len()];
    for j in 0..tau {
        for (n, t) in trajectories.iter().enumerate() {
            column[n] = t[j];
        }
        total += crps(&column, truth[j])?;
    }
    Ok(total / tau as f64)
}

/// Fraction of steps where the truth lies inside the central interval of the
/// given level, plus the mean interval width in kW. Level 0.9 uses the
/// 5%/95% quantiles, level 0.5 the 25%/75% ones.
pub fn coverage_and_width(
    trajectories: &[Vec<f64>],
    truth: &[f64],
    level: f64,
) -> Result<(f64, f64)> {
    let (lo_q, hi_q) = if (level - 0.9).abs() < 1e-12 {
        (0.05, 0.95)
    } else if (level - 0.5).abs() < 1e-12 {
        (0.25, 0.75)
    } else {
        return Err(Error::Domain(format!("unsupported interval level {level}")));
    };
    let tau = truth.len();
    let mut covered = 0usize;
    let mut width_sum = 0.0;
    let mut column = vec![0.0; trajectories.len()];
    for j in 0..tau {
        for (n, t) in trajectories.iter().enumerate() {
            column[n] = t[j];
        }
        let lo = quantile(&column, lo_q)?;
        let hi = quantile(&column, hi_q)?;
        if truth[j] >= lo && truth[j] <= hi {
            covered += 1;
        }
        width_sum += hi - lo;
    }
    Ok((covered as f64 / tau as f64, width_sum / tau as f64))
}

/// Pinball loss: q (y - p) when the truth is above the predicted quantile,
/// (1 - q)(p - y) otherwise.
pub fn pinball_loss(predicted: f64, truth: f64, q: f64) -> f64 {
    if truth >= predicted {
        q * (truth - predicted)
    } else {
        (1.0 - q) * (predicted - truth)
    }
}

/// Discrete-quantile CRPS approximation for a quantile forecast:
/// CRPS = 2 * integral of the pinball loss over q, approximated by the mean
/// over the predicted levels.
pub fn crps_from_quantiles(levels: &[f64], predicted: &[f64], truth: f64) -> Result<f64> {
    if levels.len() != predicted.len() || levels.is_empty() {
        return Err(Error::Domain("quantile levels and predictions must match".into()));
    }
    let total: f64 = levels
        .iter()
        .zip(predicted)
        .map(|(&q, &p)| pinball_loss(p, truth, q))
        .sum();
    Ok(2.0 * total / levels.len() as f64)
}
