//! Diffusion noise schedule: per-step variances, cumulative signal fractions
//! and posterior variances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schedule parameters as they appear in config files and model artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 200, beta_start: 1e-4, beta_end: 0.5 }
    }
}

/// Immutable schedule tables, indexed by diffusion step t in 1..=T
/// (t = 0 means clean data and is not stored).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    steps: usize,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

impl NoiseSchedule {
    /// Quadratic scheme: sqrt(beta) interpolates linearly from sqrt(beta_start)
    /// to sqrt(beta_end). Both endpoints are assigned exactly.
    pub fn quadratic(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "schedule variances must satisfy 0 < beta_start < beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let s1 = beta_start.sqrt();
        let s2 = beta_end.sqrt();
        let mut beta = Vec::with_capacity(steps);
        for t in 1..=steps {
            if t == 1 {
                beta.push(beta_start);
            } else if t == steps {
                beta.push(beta_end);
            } else {
                let frac = (t - 1) as f64 / (steps - 1) as f64;
                let s = s1 + frac * (s2 - s1);
                beta.push(s * s);
            }
        }
        Ok(Self::from_betas(beta))
    }

    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        Self::quadratic(cfg.steps, cfg.beta_start, cfg.beta_end)
    }

    pub(crate) fn from_betas(beta: Vec<f64>) -> Self {
        let steps = beta.len();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for &b in &beta {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        // beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t,
        // with alpha_bar_0 := 1 so beta_tilde_1 = 0.
        let mut beta_tilde = Vec::with_capacity(steps);
        for t in 0..steps {
            let prev = if t == 0 { 1.0 } else { alpha_bar[t - 1] };
            beta_tilde.push((1.0 - prev) / (1.0 - alpha_bar[t]) * beta[t]);
        }
        Self { steps, beta, alpha_bar, beta_tilde }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(Error::Domain(format!(
                "diffusion step {t} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.beta[t - 1])
    }

    /// Cumulative product of (1 - beta_s) for s in 1..=t.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alpha_bar[t - 1])
    }

    /// Reverse-transition variance, fixed rather than learned.
    pub fn posterior_variance(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.beta_tilde[t - 1])
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta_tildes(&self) -> &[f64] {
        &self.beta_tilde
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_defaults() -> NoiseSchedule {
        NoiseSchedule::quadratic(200, 1e-4, 0.5).unwrap()
    }

    #[test]
    fn endpoints_are_exact() {
        let s = paper_defaults();
        assert_eq!(s.beta(1).unwrap(), 1e-4);
        assert_eq!(s.beta(200).unwrap(), 0.5);
    }

    #[test]
    fn alpha_bar_base_case() {
        let s = paper_defaults();
        assert_eq!(s.alpha_bar(1).unwrap(), 1.0 - 1e-4);
    }

    #[test]
    fn alpha_bar_final_matches_high_precision_oracle() {
        // 200-term product computed independently at 60 decimal digits.
        const ALPHA_BAR_200: f64 = 1.971020776156781e-18;
        let s = paper_defaults();
        let got = s.alpha_bar(200).unwrap();
        assert!(got < 1e-8);
        assert!((got - ALPHA_BAR_200).abs() / ALPHA_BAR_200 < 1e-12);
    }

    #[test]
    fn posterior_variance_is_zero_at_step_one() {
        let s = paper_defaults();
        assert_eq!(s.posterior_variance(1).unwrap(), 0.0);
    }

    #[test]
    fn posterior_variance_final_matches_direct_formula() {
        let s = paper_defaults();
        let expected = (1.0 - s.alpha_bar(199).unwrap()) / (1.0 - s.alpha_bar(200).unwrap()) * 0.5;
        assert_eq!(s.posterior_variance(200).unwrap(), expected);
    }

    #[test]
    fn constant_beta_posterior_is_below_beta() {
        // With beta_t = beta for all t, (1 - alpha_{t-1}) < (1 - alpha_t).
        let mut s = paper_defaults();
        s.beta = vec![0.2; 10];
        let s = NoiseSchedule::from_betas(s.beta.clone());
        for t in 2..=10 {
            assert!(s.posterior_variance(t).unwrap() < 0.2);
        }
    }

    #[test]
    fn beta_monotone_and_alpha_strictly_decreasing() {
        let s = paper_defaults();
        for t in 2..=200 {
            assert!(s.beta(t).unwrap() >= s.beta(t - 1).unwrap());
            assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
            let bt = s.posterior_variance(t).unwrap();
            assert!(bt >= 0.0 && bt <= s.beta(t).unwrap());
        }
    }

    #[test]
    fn sqrt_beta_second_differences_vanish() {
        let s = paper_defaults();
        let roots: Vec<f64> = s.betas().iter().map(|b| b.sqrt()).collect();
        for t in 1..roots.len() - 1 {
            let dd = roots[t + 1] - 2.0 * roots[t] + roots[t - 1];
            assert!(dd.abs() < 1e-12);
        }
    }

    #[test]
    fn incremental_product_matches_direct_recomputation() {
        let s = NoiseSchedule::quadratic(50, 1e-3, 0.3).unwrap();
        for t in 1..=50 {
            let direct: f64 = (1..=t).map(|u| 1.0 - s.beta(u).unwrap()).product();
            assert!((s.alpha_bar(t).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_ranges_are_config_errors() {
        assert!(matches!(NoiseSchedule::quadratic(1, 1e-4, 0.5), Err(Error::Config(_))));
        assert!(matches!(NoiseSchedule::quadratic(10, 0.0, 0.5), Err(Error::Config(_))));
        assert!(matches!(NoiseSchedule::quadratic(10, 0.5, 0.1), Err(Error::Config(_))));
        assert!(matches!(NoiseSchedule::quadratic(10, 0.1, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn out_of_range_step_is_domain_error() {
        let s = paper_defaults();
        assert!(matches!(s.beta(0), Err(Error::Domain(_))));
        assert!(matches!(s.posterior_variance(201), Err(Error::Domain(_))));
    }
}
