//! Synthetic desk-scale corpus generator.
//!
//! Each day's load profile is drawn from a per-step Gaussian whose moments
//! are known in closed form given the observable covariates:
//!
//!   mean_j = e * unit_power * shape_j(daytype, temperature) * (1 + rho * delta_prev)
//!   std_j  = noise_rel * mean_j + noise_abs * (ev_count_mean * unit_power)
//!
//! where `shape_j` mixes a baseline, a morning bump and an evening bump
//! (the evening bump is scaled by a temperature factor), `e` is the day's EV
//! count and `delta_prev` is the previous day's mean load relative to a fixed
//! reference (so history is informative). Profiles are floored at 0 kW; with
//! default parameters the floor sits more than 4 sigma below the mean, so the
//! truncation is negligible and the Gaussian moments remain the benchmark.
//!
//! Sessions are an exact skyline decomposition of the day profile into `e`
//! constant-power bin-aligned sessions: aggregation reproduces the profile
//! and the per-day session count equals the covariate e. The ideal-ensemble
//! CRPS of the true conditional distribution is sigma/sqrt(pi) per step.

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::series::{check_resolution, steps_per_day, TimeSeries};
use super::sessions::ChargingSession;
use super::windows::ForecastWindow;
use crate::error::{Error, Result};
use crate::nn::init::substream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub days: usize,
    pub start_date: NaiveDate,
    pub resolution_min: u32,
    pub seed: u64,
    /// Mean EV count per day.
    pub ev_count_mean: f64,
    /// Daily count is uniform in [1 - spread, 1 + spread] * mean.
    pub ev_count_spread: f64,
    /// kW of aggregate load per EV at shape value 1.
    pub unit_power_kw: f64,
    /// Relative noise on the conditional mean.
    pub noise_rel: f64,
    /// Absolute noise as a fraction of the nominal scale.
    pub noise_abs: f64,
    /// Strength of the evening-peak temperature modulation.
    pub temp_sensitivity: f64,
    /// Weight of the previous-day persistence factor.
    pub persistence: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            days: 200,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            resolution_min: 15,
            seed: 7,
            ev_count_mean: 170.0,
            ev_count_spread: 0.4,
            unit_power_kw: 0.05,
            noise_rel: 0.08,
            noise_abs: 0.03,
            temp_sensitivity: 0.35,
            persistence: 0.25,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        check_resolution(self.resolution_min)?;
        if self.days == 0 {
            return Err(Error::Config("synthetic corpus needs at least one day".into()));
        }
        if !(self.ev_count_spread >= 0.0 && self.ev_count_spread < 1.0) {
            return Err(Error::Config("ev_count_spread must be in [0, 1)".into()));
        }
        // The skyline decomposition can need up to one session per step on
        // noisy profiles; the smallest possible daily count must cover that.
        let steps = steps_per_day(self.resolution_min) as f64;
        let min_count = (self.ev_count_mean * (1.0 - self.ev_count_spread)).floor();
        if min_count < steps + 2.0 {
            return Err(Error::Config(format!(
                "ev_count_mean {} with spread {} can fall below the {} sessions needed to decompose a {}-step day",
                self.ev_count_mean,
                self.ev_count_spread,
                steps + 2.0,
                steps
            )));
        }
        if !(self.unit_power_kw > 0.0 && self.noise_rel >= 0.0 && self.noise_abs >= 0.0) {
            return Err(Error::Config("synthetic power/noise parameters must be non-negative".into()));
        }
        if !(self.persistence >= 0.0 && self.persistence < 1.0) {
            return Err(Error::Config("persistence must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Fixed reference for the persistence factor: expected mean load at
    /// neutral temperature averaged over the seven day types.
    pub fn reference_mean_load(&self) -> f64 {
        let steps = steps_per_day(self.resolution_min);
        let mut total = 0.0;
        for weekday in 0..7 {
            for j in 0..steps {
                total += shape_value(weekday, (j as f64 + 0.5) / steps as f64, 1.0);
            }
        }
        self.ev_count_mean * self.unit_power_kw * total / (7 * steps) as f64
    }
}

fn gauss_bump(phi: f64, center: f64, width: f64) -> f64 {
    (-((phi - center) * (phi - center)) / (2.0 * width * width)).exp()
}

/// Daily shape template at time fraction `phi`; weekdays carry a commute
/// morning hump and a strong evening peak, weekends a flat midday dome.
/// `evening_factor` scales the evening bump (temperature modulation).
fn shape_value(weekday: usize, phi: f64, evening_factor: f64) -> f64 {
    if weekday < 5 {
        0.30 + 0.85 * gauss_bump(phi, 0.36, 0.06) + 1.55 * evening_factor * gauss_bump(phi, 0.79, 0.08)
    } else {
        0.35 + 0.95 * gauss_bump(phi, 0.55, 0.13) + 0.55 * evening_factor * gauss_bump(phi, 0.80, 0.09)
    }
}

/// Temperature modulation of the evening peak given the day's forecast
/// temperatures: hot evenings push charging demand up.
fn evening_factor(cfg: &SyntheticConfig, temps: &[f64]) -> f64 {
    let steps = temps.len();
    let lo = (0.70 * steps as f64) as usize;
    let hi = ((0.95 * steps as f64) as usize).min(steps);
    let mean_eve: f64 = temps[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    1.0 + cfg.temp_sensitivity * ((mean_eve - 16.0) / 8.0).tanh()
}

/// Closed-form conditional moments of a day profile given its covariates and
/// the previous day's mean load. This is the generator's own math, exposed so
/// ideal-ensemble scores can be computed.
pub fn conditional_moments(
    cfg: &SyntheticConfig,
    weekday: usize,
    temps: &[f64],
    ev_count: f64,
    prev_day_mean: f64,
) -> (Vec<f64>, Vec<f64>) {
    let steps = temps.len();
    let w_temp = evening_factor(cfg, temps);
    let delta_prev = (prev_day_mean / cfg.reference_mean_load() - 1.0).clamp(-0.5, 0.5);
    let persist = 1.0 + cfg.persistence * delta_prev;
    let scale = cfg.ev_count_mean * cfg.unit_power_kw;
    let mut mean = Vec::with_capacity(steps);
    let mut std = Vec::with_capacity(steps);
    for j in 0..steps {
        let phi = (j as f64 + 0.5) / steps as f64;
        let m = ev_count * cfg.unit_power_kw * shape_value(weekday, phi, w_temp) * persist;
        mean.push(m);
        std.push(cfg.noise_rel * m + cfg.noise_abs * scale);
    }
    (mean, std)
}

/// Moments for a pipeline window: weekday and temperatures from the window,
/// previous-day mean from the last day of its history.
pub fn window_moments(cfg: &SyntheticConfig, window: &ForecastWindow) -> (Vec<f64>, Vec<f64>) {
    let steps = steps_per_day(cfg.resolution_min);
    let weekday = window.anchor.date().weekday().num_days_from_monday() as usize;
    let hist = &window.history;
    let prev_day_mean = hist[hist.len() - steps..].iter().sum::<f64>() / steps as f64;
    conditional_moments(cfg, weekday, &window.temperature, window.ev_count, prev_day_mean)
}

/// Expected CRPS of an ideal infinite ensemble drawn from the true
/// conditional N(mean, std^2): sigma / sqrt(pi) per step, averaged.
pub fn ideal_crps(std: &[f64]) -> f64 {
    std.iter().sum::<f64>() / std.len() as f64 / std::f64::consts::PI.sqrt()
}

pub struct SyntheticData {
    pub sessions: Vec<ChargingSession>,
    pub temperature: TimeSeries,
    pub humidity: TimeSeries,
}

/// Deterministic corpus generation: same config and seed, same corpus.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let steps = steps_per_day(cfg.resolution_min);
    let start = cfg.start_date.and_hms_opt(0, 0, 0).unwrap();

    let mut weather_rng = substream_rng(cfg.seed, 1);
    let mut count_rng = substream_rng(cfg.seed, 2);
    let mut noise_rng = substream_rng(cfg.seed, 3);

    let mut temperature = Vec::with_capacity(cfg.days * steps);
    let mut humidity = Vec::with_capacity(cfg.days * steps);
    let mut sessions = Vec::new();
    let mut prev_day_mean = cfg.reference_mean_load();
    let mut temp_ar = 0.0f64;

    for day in 0..cfg.days {
        let date = cfg.start_date + chrono::Duration::days(day as i64);
        let weekday = date.weekday().num_days_from_monday() as usize;
        let doy = date.ordinal() as f64;
        let season = 15.0 + 8.0 * (2.0 * std::f64::consts::PI * (doy - 100.0) / 365.0).sin();

        let mut temps = Vec::with_capacity(steps);
        let mut hums = Vec::with_capacity(steps);
        for j in 0..steps {
            let phi = (j as f64 + 0.5) / steps as f64;
            temp_ar = 0.9 * temp_ar + 0.6 * weather_rng.sample::<f64, _>(StandardNormal);
            let u = season + 5.0 * (2.0 * std::f64::consts::PI * phi - 2.2).sin() + temp_ar;
            let v = (70.0 - 1.8 * (u - 15.0) + 6.0 * weather_rng.sample::<f64, _>(StandardNormal))
                .clamp(15.0, 100.0);
            temps.push(u);
            hums.push(v);
        }

        let spread = cfg.ev_count_spread;
        let u: f64 = count_rng.random();
        let ev_count = (cfg.ev_count_mean * (1.0 - spread + 2.0 * spread * u)).round().max(1.0);

        let (mean, std) = conditional_moments(cfg, weekday, &temps, ev_count, prev_day_mean);
        let mut profile = Vec::with_capacity(steps);
        for j in 0..steps {
            let xi: f64 = noise_rng.sample(StandardNormal);
            profile.push((mean[j] + std[j] * xi).max(0.0));
        }
        prev_day_mean = profile.iter().sum::<f64>() / steps as f64;

        let day_start = start + chrono::Duration::days(day as i64);
        let day_sessions =
            decompose_day(&profile, ev_count as usize, day_start, cfg.resolution_min)?;
        sessions.extend(day_sessions);
        temperature.extend(temps);
        humidity.extend(hums);
    }

    Ok(SyntheticData {
        sessions,
        temperature: TimeSeries::new(start, cfg.resolution_min, temperature)?,
        humidity: TimeSeries::new(start, cfg.resolution_min, humidity)?,
    })
}

/// Skyline decomposition of a non-negative bin profile into exactly
/// `target_count` constant-power, bin-aligned sessions whose aggregation
/// reproduces the profile.
fn decompose_day(
    profile: &[f64],
    target_count: usize,
    day_start: NaiveDateTime,
    resolution_min: u32,
) -> Result<Vec<ChargingSession>> {
    const EPS: f64 = 1e-12;
    let steps = profile.len();
    // (start_bin, end_bin, power)
    let mut boxes: Vec<(usize, usize, f64)> = Vec::new();
    let mut open: Vec<(usize, f64)> = Vec::new();
    let mut level = 0.0f64;
    for j in 0..=steps {
        let target = if j < steps { profile[j] } else { 0.0 };
        if target > level + EPS {
            open.push((j, target - level));
            level = target;
        } else if target < level - EPS {
            let mut to_drop = level - target;
            while to_drop > EPS {
                let (s, p) = *open.last().expect("levels imply an open box");
                if p <= to_drop + EPS {
                    boxes.push((s, j, p));
                    open.pop();
                    to_drop -= p;
                } else {
                    boxes.push((s, j, to_drop));
                    open.last_mut().unwrap().1 = p - to_drop;
                    to_drop = 0.0;
                }
            }
            level = target;
        }
    }
    boxes.retain(|&(s, e, p)| e > s && p > EPS);

    if boxes.len() > target_count {
        return Err(Error::Config(format!(
            "profile needs {} sessions but only {target_count} EVs were drawn; raise ev_count_mean",
            boxes.len()
        )));
    }
    // Split the largest-energy box until the session count matches the EV count.
    while boxes.len() < target_count {
        let (idx, _) = boxes
            .iter()
            .enumerate()
            .map(|(i, &(s, e, p))| (i, (e - s) as f64 * p))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("non-empty boxes");
        let (s, e, p) = boxes[idx];
        if e - s >= 2 {
            let mid = s + (e - s) / 2;
            boxes[idx] = (s, mid, p);
            boxes.push((mid, e, p));
        } else {
            boxes[idx] = (s, e, p / 2.0);
            boxes.push((s, e, p / 2.0));
        }
    }

    let res = resolution_min as f64;
    let sessions = boxes
        .into_iter()
        .map(|(s, e, p)| {
            let duration_min = (e - s) as f64 * res;
            ChargingSession {
                start: day_start + chrono::Duration::minutes(s as i64 * resolution_min as i64),
                duration_min,
                energy_kwh: p * duration_min / 60.0,
            }
        })
        .collect();
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sessions::{aggregate_sessions, count_evs};

    fn desk_cfg() -> SyntheticConfig {
        SyntheticConfig {
            days: 30,
            resolution_min: 60,
            ev_count_mean: 60.0,
            seed: 11,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_corpus() {
        let cfg = desk_cfg();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.sessions, b.sessions);
        assert_eq!(a.temperature, b.temperature);
        assert_eq!(a.humidity, b.humidity);
    }

    #[test]
    fn aggregation_reproduces_daily_profiles_and_counts() {
        let cfg = desk_cfg();
        let data = generate(&cfg).unwrap();
        let load = aggregate_sessions(&data.sessions, cfg.resolution_min).unwrap();
        // Session count per day equals the EV covariate by construction.
        for day in 0..cfg.days {
            let date = cfg.start_date + chrono::Duration::days(day as i64);
            let n = count_evs(&data.sessions, date);
            assert!(n >= 20, "day {date} has implausibly few sessions: {n}");
        }
        // Energy conservation across the whole corpus.
        let total_energy: f64 = data.sessions.iter().map(|s| s.energy_kwh).sum();
        let series_energy: f64 = load.values.iter().sum::<f64>() * cfg.resolution_min as f64 / 60.0;
        assert!((total_energy - series_energy).abs() / total_energy < 1e-9);
    }

    #[test]
    fn doubling_ev_count_doubles_expected_daily_energy() {
        let mut cfg = desk_cfg();
        cfg.days = 200;
        let base = generate(&cfg).unwrap();
        let mut cfg2 = cfg;
        cfg2.ev_count_mean = 2.0 * cfg.ev_count_mean;
        let doubled = generate(&cfg2).unwrap();
        let daily = |d: &SyntheticData| {
            d.sessions.iter().map(|s| s.energy_kwh).sum::<f64>() / cfg.days as f64
        };
        let ratio = daily(&doubled) / daily(&base);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");

        // Monte-Carlo against the generator's closed-form mean: realized mean
        // daily energy tracks ev_count_mean * unit_power * mean shape.
        let hours_per_day = 24.0;
        let closed_form = cfg.ev_count_mean * cfg.unit_power_kw
            * (cfg.reference_mean_load() / (cfg.ev_count_mean * cfg.unit_power_kw))
            * hours_per_day;
        let realized = daily(&base);
        assert!((realized - closed_form).abs() / closed_form < 0.05,
            "realized {realized} vs closed form {closed_form}");
    }

    #[test]
    fn weekend_flag_flips_the_shape_template() {
        let cfg = desk_cfg();
        let temps = vec![16.0; 24];
        let (weekday_mean, _) = conditional_moments(&cfg, 0, &temps, 60.0, cfg.reference_mean_load());
        let (weekend_mean, _) = conditional_moments(&cfg, 5, &temps, 60.0, cfg.reference_mean_load());
        let diff: f64 = weekday_mean
            .iter()
            .zip(&weekend_mean)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1.0);
        // Weekday evening peak dominates the weekend's.
        let eve = 19; // 19:30 at hourly resolution
        assert!(weekday_mean[eve] > weekend_mean[eve]);
    }

    #[test]
    fn hot_evenings_raise_the_evening_peak() {
        let cfg = desk_cfg();
        let cool = vec![10.0; 24];
        let hot = vec![28.0; 24];
        let (m_cool, _) = conditional_moments(&cfg, 2, &cool, 60.0, cfg.reference_mean_load());
        let (m_hot, _) = conditional_moments(&cfg, 2, &hot, 60.0, cfg.reference_mean_load());
        assert!(m_hot[19] > m_cool[19]);
        // Morning is untouched by the evening modulation.
        assert!((m_hot[2] - m_cool[2]).abs() < 1e-12);
    }

    #[test]
    fn decomposition_is_exact_on_a_hand_profile() {
        let profile = vec![0.0, 2.0, 3.5, 1.5, 1.5, 0.5, 0.0, 4.0];
        let day = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let sessions = decompose_day(&profile, 12, day, 60).unwrap();
        assert_eq!(sessions.len(), 12);
        let load = aggregate_sessions(&sessions, 60).unwrap();
        let offset = load.index_of(day + chrono::Duration::hours(1)).unwrap();
        for (j, &expected) in profile.iter().enumerate().skip(1) {
            let got = load.values[offset + j - 1];
            assert!((got - expected).abs() < 1e-9, "bin {j}: {got} vs {expected}");
        }
    }

    #[test]
    fn moments_are_safe_against_negative_truncation() {
        // The 0 kW floor must sit several sigma below the mean everywhere.
        let cfg = SyntheticConfig::default();
        let data = generate(&SyntheticConfig { days: 40, ..cfg }).unwrap();
        let mut min_z = f64::INFINITY;
        let steps = steps_per_day(cfg.resolution_min);
        let mut prev_mean = cfg.reference_mean_load();
        for day in 0..40 {
            let date = cfg.start_date + chrono::Duration::days(day as i64);
            let weekday = date.weekday().num_days_from_monday() as usize;
            let temps =
                &data.temperature.values[day * steps..(day + 1) * steps];
            let (mean, std) = conditional_moments(&cfg, weekday, temps, cfg.ev_count_mean, prev_mean);
            for j in 0..steps {
                min_z = min_z.min(mean[j] / std[j]);
            }
            prev_mean = mean.iter().sum::<f64>() / steps as f64;
        }
        assert!(min_z > 3.5, "floor too close to mean: {min_z} sigma");
    }
}
