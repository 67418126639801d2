//! Sliding-window dataset assembly and the temporal train/test split.

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::series::TimeSeries;
use super::sessions::{count_evs_in_range, ChargingSession};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// History length omega in steps.
    pub history_steps: usize,
    /// Horizon length tau in steps.
    pub horizon_steps: usize,
    pub resolution_min: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { history_steps: 480, horizon_steps: 96, resolution_min: 15 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        super::series::check_resolution(self.resolution_min)?;
        if self.horizon_steps == 0 || self.history_steps == 0 {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        if self.history_steps % self.horizon_steps != 0 {
            return Err(Error::Config(format!(
                "history_steps {} must be a multiple of horizon_steps {}",
                self.history_steps, self.horizon_steps
            )));
        }
        Ok(())
    }
}

/// One sample in physical units: history p, target x0 (kW), covariates
/// u (deg C), v (%), one-hot day d and EV count e.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastWindow {
    /// Stable identifier used for RNG substreams; derived from the anchor.
    pub id: u64,
    /// Start of the forecast horizon.
    pub anchor: NaiveDateTime,
    pub history: Vec<f64>,
    pub target: Vec<f64>,
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
    pub day_onehot: [f64; 7],
    pub ev_count: f64,
}

impl ForecastWindow {
    pub fn validate(&self, cfg: &WindowConfig) -> Result<()> {
        if self.history.len() != cfg.history_steps
            || self.target.len() != cfg.horizon_steps
            || self.temperature.len() != cfg.horizon_steps
            || self.humidity.len() != cfg.horizon_steps
        {
            return Err(Error::Data(format!(
                "window at {} has inconsistent lengths",
                self.anchor
            )));
        }
        let ones = self.day_onehot.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || self.day_onehot.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data("day one-hot must have exactly one 1".into()));
        }
        Ok(())
    }
}

/// Monday = 0 ... Sunday = 6.
pub fn weekday_onehot(date: NaiveDate) -> [f64; 7] {
    let mut d = [0.0; 7];
    d[date.weekday().num_days_from_monday() as usize] = 1.0;
    d
}

fn all_finite(slice: &[f64]) -> bool {
    slice.iter().all(|v| v.is_finite())
}

/// Builds one window per day boundary where history, target and weather are
/// complete. Windows with any missing bin are dropped and reported in the
/// second return value.
pub fn build_windows(
    load: &TimeSeries,
    temperature: &TimeSeries,
    humidity: &TimeSeries,
    sessions: &[ChargingSession],
    cfg: &WindowConfig,
) -> Result<(Vec<ForecastWindow>, Vec<NaiveDate>)> {
    cfg.validate()?;
    if load.resolution_min != cfg.resolution_min
        || temperature.resolution_min != cfg.resolution_min
        || humidity.resolution_min != cfg.resolution_min
    {
        return Err(Error::Data(format!(
            "misaligned series resolutions: load {} min, temperature {} min, humidity {} min, config {} min",
            load.resolution_min, temperature.resolution_min, humidity.resolution_min, cfg.resolution_min
        )));
    }
    let step = chrono::Duration::minutes(cfg.resolution_min as i64);
    let mut windows = Vec::new();
    let mut dropped = Vec::new();

    // Anchors are midnights whose history and horizon fit inside the load
    // series; data gaps inside a feasible anchor's range are logged drops.
    let mut anchor = load.timestamp(0).date().and_hms_opt(0, 0, 0).unwrap();
    if anchor < load.timestamp(0) {
        anchor += chrono::Duration::days(1);
    }
    loop {
        let history_start = anchor - step * cfg.history_steps as i32;
        let horizon_end = anchor + step * cfg.horizon_steps as i32;
        if load.index_of(horizon_end - step).is_none() {
            break;
        }
        let feasible = load.index_of(history_start).is_some() && load.index_of(anchor).is_some();
        if !feasible {
            anchor += chrono::Duration::days(1);
            continue;
        }
        let day = anchor.date();
        let candidate = (|| -> Option<ForecastWindow> {
            let h0 = load.index_of(history_start)?;
            let t0 = load.index_of(anchor)?;
            let history = load.slice(h0, cfg.history_steps)?.to_vec();
            let target = load.slice(t0, cfg.horizon_steps)?.to_vec();
            let w0 = temperature.index_of(anchor)?;
            let temp = temperature.slice(w0, cfg.horizon_steps)?.to_vec();
            let hw0 = humidity.index_of(anchor)?;
            let hum = humidity.slice(hw0, cfg.horizon_steps)?.to_vec();
            if !(all_finite(&history) && all_finite(&target) && all_finite(&temp) && all_finite(&hum)) {
                return None;
            }
            let ev_count = count_evs_in_range(sessions, anchor, horizon_end) as f64;
            Some(ForecastWindow {
                id: (anchor.and_utc().timestamp() / 60) as u64,
                anchor,
                history,
                target,
                temperature: temp,
                humidity: hum,
                day_onehot: weekday_onehot(day),
                ev_count,
            })
        })();
        match candidate {
            Some(w) => {
                w.validate(cfg)?;
                windows.push(w);
            }
            None => dropped.push(day),
        }
        anchor += chrono::Duration::days(1);
    }
    Ok((windows, dropped))
}

/// Strictly temporal split with an embargo: a train window must end before
/// `split`, a test window (history included) must start at or after it.
/// Windows straddling the boundary are discarded.
pub fn split_windows(
    windows: &[ForecastWindow],
    cfg: &WindowConfig,
    split: NaiveDate,
) -> (Vec<ForecastWindow>, Vec<ForecastWindow>) {
    let split_dt = split.and_hms_opt(0, 0, 0).unwrap();
    let step = chrono::Duration::minutes(cfg.resolution_min as i64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for w in windows {
        let end = w.anchor + step * cfg.horizon_steps as i32;
        let hist_start = w.anchor - step * cfg.history_steps as i32;
        if end <= split_dt {
            train.push(w.clone());
        } else if hist_start >= split_dt {
            test.push(w.clone());
        }
    }
    (train, test)
}
