//! Charging-session records: CSV ingest, load aggregation, EV counting.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::series::{check_resolution, TimeSeries};
use crate::error::{Error, Result};

/// One charging session: constant power energy/duration over
/// [start, start + duration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingSession {
    pub start: NaiveDateTime,
    pub duration_min: f64,
    pub energy_kwh: f64,
}

impl ChargingSession {
    fn validate(&self, lineage: &str) -> Result<()> {
        if !(self.duration_min > 0.0) || !self.duration_min.is_finite() {
            return Err(Error::Data(format!(
                "{lineage}: duration must be positive, got {}",
                self.duration_min
            )));
        }
        if !(self.energy_kwh >= 0.0) || !self.energy_kwh.is_finite() {
            return Err(Error::Data(format!(
                "{lineage}: energy must be finite and non-negative, got {}",
                self.energy_kwh
            )));
        }
        Ok(())
    }

    pub fn power_kw(&self) -> f64 {
        self.energy_kwh / (self.duration_min / 60.0)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + chrono::Duration::milliseconds((self.duration_min * 60_000.0).round() as i64)
    }
}

pub fn parse_timestamp(raw: &str) -> Result<NaiveDateTime> {
    let cleaned = raw.trim();
    NaiveDateTime::parse_from_str(cleaned, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(cleaned, "%Y-%m-%d %H:%M:%S"))
        .map_err(|_| Error::Data(format!("unparseable ISO-8601 timestamp '{raw}'")))
}

/// Reads `start_time,duration_min,energy_kwh` rows; every record is validated
/// and failures carry the row number.
pub fn read_sessions_csv(path: &Path) -> Result<Vec<ChargingSession>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    {
        let headers = reader.headers()?;
        let expected = ["start_time", "duration_min", "energy_kwh"];
        if headers.iter().ne(expected) {
            return Err(Error::Data(format!(
                "sessions CSV header must be {expected:?}, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let lineage = format!("{} row {}", path.display(), i + 2);
        let start = parse_timestamp(record.get(0).unwrap_or_default())
            .map_err(|e| Error::Data(format!("{lineage}: {e}")))?;
        let duration_min: f64 = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("{lineage}: bad duration")))?;
        let energy_kwh: f64 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("{lineage}: bad energy")))?;
        let session = ChargingSession { start, duration_min, energy_kwh };
        session.validate(&lineage)?;
        out.push(session);
    }
    Ok(out)
}

pub fn write_sessions_csv(path: &Path, sessions: &[ChargingSession]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["start_time", "duration_min", "energy_kwh"]).map_err(Error::from)?;
    for s in sessions {
        writer
            .write_record([
                s.start.format("%Y-%m-%dT%H:%M:%S").to_string(),
                format!("{}", s.duration_min),
                format!("{}", s.energy_kwh),
            ])
            .map_err(Error::from)?;
    }
    writer.flush()?;
    Ok(())
}

fn epoch_minutes(ts: NaiveDateTime) -> f64 {
    ts.and_utc().timestamp() as f64 / 60.0
}

/// Aggregates sessions to a total load profile in kW. Each session
/// contributes its constant power over [start, start + duration); a bin's
/// load is the time-weighted sum of active session powers, so the series
/// conserves total energy.
pub fn aggregate_sessions(sessions: &[ChargingSession], resolution_min: u32) -> Result<TimeSeries> {
    check_resolution(resolution_min)?;
    if sessions.is_empty() {
        return Err(Error::Data("cannot aggregate an empty session set".into()));
    }
    for (i, s) in sessions.iter().enumerate() {
        s.validate(&format!("session {i} (start {})", s.start))?;
    }
    let res = resolution_min as f64;
    let first = sessions.iter().map(|s| epoch_minutes(s.start)).fold(f64::INFINITY, f64::min);
    let last = sessions
        .iter()
        .map(|s| epoch_minutes(s.start) + s.duration_min)
        .fold(f64::NEG_INFINITY, f64::max);
    let grid_start = (first / res).floor() * res;
    let bins = ((last - grid_start) / res).ceil() as usize;
    let mut values = vec![0.0; bins.max(1)];

    for s in sessions {
        let power = s.power_kw();
        let s0 = epoch_minutes(s.start);
        let s1 = s0 + s.duration_min;
        let first_bin = ((s0 - grid_start) / res).floor() as usize;
        let last_bin = (((s1 - grid_start) / res).ceil() as usize).min(values.len());
        for b in first_bin..last_bin {
            let bin_start = grid_start + b as f64 * res;
            let overlap = (s1.min(bin_start + res) - s0.max(bin_start)).max(0.0);
            values[b] += power * overlap / res;
        }
    }

    let start = chrono::DateTime::from_timestamp((grid_start * 60.0).round() as i64, 0)
        .ok_or_else(|| Error::Data("grid start out of range".into()))?
        .naive_utc();
    TimeSeries::new(start, resolution_min, values)
}

/// Number of sessions whose start falls in the given calendar day.
pub fn count_evs(sessions: &[ChargingSession], day: NaiveDate) -> usize {
    sessions.iter().filter(|s| s.start.date() == day).count()
}

/// Sessions starting in [from, to); used for per-window EV counts.
pub fn count_evs_in_range(sessions: &[ChargingSession], from: NaiveDateTime, to: NaiveDateTime) -> usize {
    sessions.iter().filter(|s| s.start >= from && s.start < to).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dt(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn session(start: &str, duration_min: f64, energy_kwh: f64) -> ChargingSession {
        ChargingSession { start: dt(start), duration_min, energy_kwh }
    }

    #[test]
    fn one_kwh_over_an_hour_gives_four_one_kw_bins() {
        let s = vec![session("2018-01-05T10:00:00", 60.0, 1.0)];
        let load = aggregate_sessions(&s, 15).unwrap();
        assert_eq!(load.values, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(load.start, dt("2018-01-05T10:00:00"));
    }

    #[test]
    fn session_inside_one_bin() {
        // 0.5 kWh over 6 minutes, fully inside one 15-min bin:
        // bin average power = energy / bin hours = 0.5 / 0.25 = 2 kW.
        let s = vec![session("2018-01-05T10:03:00", 6.0, 0.5)];
        let load = aggregate_sessions(&s, 15).unwrap();
        assert_eq!(load.len(), 1);
        assert!((load.values[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_sessions_match_minute_level_oracle() {
        let sessions = vec![
            session("2018-01-05T10:07:00", 33.0, 2.2),
            session("2018-01-05T10:20:00", 55.0, 4.4),
            session("2018-01-05T09:58:00", 24.0, 0.9),
        ];
        let load = aggregate_sessions(&sessions, 15).unwrap();

        // Brute force: simulate per minute, then downsample.
        let grid0 = dt("2018-01-05T09:45:00");
        let mut minute = vec![0.0; load.len() * 15];
        for s in &sessions {
            let p = s.power_kw();
            let off = (s.start - grid0).num_minutes();
            for m in 0..s.duration_min as i64 {
                minute[(off + m) as usize] += p;
            }
        }
        for (b, &v) in load.values.iter().enumerate() {
            let avg: f64 = minute[b * 15..(b + 1) * 15].iter().sum::<f64>() / 15.0;
            assert!((v - avg).abs() < 1e-9, "bin {b}: {v} vs oracle {avg}");
        }
    }

    #[test]
    fn energy_is_conserved() {
        let sessions = vec![
            session("2018-01-05T10:07:00", 93.0, 7.31),
            session("2018-01-05T11:20:00", 17.0, 1.05),
        ];
        let load = aggregate_sessions(&sessions, 15).unwrap();
        let total: f64 = load.values.iter().sum::<f64>() * 0.25;
        let expected: f64 = sessions.iter().map(|s| s.energy_kwh).sum();
        assert!((total - expected).abs() / expected < 1e-9);
    }

    #[test]
    fn zero_duration_is_rejected_with_lineage() {
        let s = vec![session("2018-01-05T10:00:00", 0.0, 1.0)];
        let err = aggregate_sessions(&s, 15).unwrap_err();
        assert!(err.to_string().contains("session 0"));
    }

    #[test]
    fn count_evs_uses_start_day_boundary() {
        let sessions = vec![
            session("2018-01-05T00:00:00", 30.0, 1.0),
            session("2018-01-05T23:59:00", 30.0, 1.0),
            session("2018-01-05T12:00:00", 30.0, 1.0),
            session("2018-01-04T23:59:00", 120.0, 1.0),
        ];
        let day = NaiveDate::from_ymd_opt(2018, 1, 5).unwrap();
        assert_eq!(count_evs(&sessions, day), 3);
        assert_eq!(count_evs(&[], day), 0);
    }

    #[test]
    fn count_evs_matches_brute_force_on_random_corpus() {
        use rand::Rng;
        let mut rng = crate::nn::init::substream_rng(77, 0);
        let base = dt("2018-05-01T00:00:00");
        let sessions: Vec<ChargingSession> = (0..300)
            .map(|_| ChargingSession {
                start: base + chrono::Duration::minutes(rng.random_range(0..30 * 24 * 60)),
                duration_min: rng.random_range(5.0..300.0),
                energy_kwh: rng.random_range(0.1..50.0),
            })
            .collect();
        for day_offset in [0i64, 3, 11, 29] {
            let day = (base + chrono::Duration::days(day_offset)).date();
            let brute = sessions.iter().filter(|s| s.start.date() == day).count();
            assert_eq!(count_evs(&sessions, day), brute);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.csv");
        let sessions = vec![
            session("2018-01-05T10:07:00", 93.5, 7.31),
            session("2018-01-05T11:20:00", 17.0, 1.05),
        ];
        write_sessions_csv(&path, &sessions).unwrap();
        let back = read_sessions_csv(&path).unwrap();
        assert_eq!(back, sessions);
    }

    #[test]
    fn bad_csv_row_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.csv");
        std::fs::write(
            &path,
            "start_time,duration_min,energy_kwh\n2018-01-05T10:00:00,30,1.0\n2018-01-05T11:00:00,-5,1.0\n",
        )
        .unwrap();
        let err = read_sessions_csv(&path).unwrap_err();
        assert!(err.to_string().contains("row 3"));
    }
}
