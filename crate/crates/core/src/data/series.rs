//! Fixed-resolution time series with a bin-aligned start.

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values on a regular grid of `resolution_min` minutes. Missing data is
/// represented as NaN; ingest paths decide how gaps propagate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start: NaiveDateTime,
    pub resolution_min: u32,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: NaiveDateTime, resolution_min: u32, values: Vec<f64>) -> Result<Self> {
        check_resolution(resolution_min)?;
        if (start.minute() * 60 + start.second()) % (resolution_min * 60) != 0 {
            return Err(Error::Data(format!(
                "series start {start} is not aligned to the {resolution_min}-min grid"
            )));
        }
        Ok(Self { start, resolution_min, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + chrono::Duration::minutes(self.resolution_min as i64 * index as i64)
    }

    /// Grid index of an exactly aligned timestamp.
    pub fn index_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let delta = (ts - self.start).num_seconds();
        let step = self.resolution_min as i64 * 60;
        if delta < 0 || delta % step != 0 {
            return None;
        }
        let idx = (delta / step) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    pub fn slice(&self, from: usize, len: usize) -> Option<&[f64]> {
        self.values.get(from..from + len)
    }
}

pub fn check_resolution(resolution_min: u32) -> Result<()> {
    if resolution_min == 0 || 60 % resolution_min != 0 {
        return Err(Error::Config(format!(
            "resolution {resolution_min} min must divide 60"
        )));
    }
    Ok(())
}

/// Steps per day at the given resolution.
pub fn steps_per_day(resolution_min: u32) -> usize {
    (24 * 60 / resolution_min) as usize
}
