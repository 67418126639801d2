//! Weather CSV ingest: temperature and humidity forecast channels.

use std::path::Path;

use chrono::NaiveDateTime;

use super::series::{check_resolution, TimeSeries};
use super::sessions::parse_timestamp;
use crate::error::{Error, Result};

/// Reads `timestamp,temperature_c,humidity_pct` rows onto the target grid.
/// Rows may be at the target resolution or coarser (e.g. hourly): each value
/// is forward-filled over the bins it covers, up to one hour. Bins with no
/// covering record are NaN and windows touching them are dropped downstream.
pub fn read_weather_csv(
    path: &Path,
    resolution_min: u32,
) -> Result<(TimeSeries, TimeSeries)> {
    check_resolution(resolution_min)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    {
        let headers = reader.headers()?;
        let expected = ["timestamp", "temperature_c", "humidity_pct"];
        if headers.iter().ne(expected) {
            return Err(Error::Data(format!(
                "weather CSV header must be {expected:?}, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    let mut records: Vec<(NaiveDateTime, f64, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let lineage = format!("{} row {}", path.display(), i + 2);
        let ts = parse_timestamp(record.get(0).unwrap_or_default())
            .map_err(|e| Error::Data(format!("{lineage}: {e}")))?;
        let t: f64 = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("{lineage}: bad temperature")))?;
        let h: f64 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Data(format!("{lineage}: bad humidity")))?;
        if !t.is_finite() || !h.is_finite() {
            return Err(Error::Data(format!("{lineage}: non-finite weather value")));
        }
        records.push((ts, t, h));
    }
    if records.is_empty() {
        return Err(Error::Data(format!("{}: no weather rows", path.display())));
    }
    records.sort_by_key(|r| r.0);
    for pair in records.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Data(format!(
                "duplicate weather timestamp {}",
                pair[0].0
            )));
        }
    }

    let step = chrono::Duration::minutes(resolution_min as i64);
    let first = records[0].0;
    let offset = (first.and_utc().timestamp() / 60) % resolution_min as i64;
    if offset != 0 {
        return Err(Error::Data(format!(
            "weather timestamps must align to the {resolution_min}-min grid, first row is {first}"
        )));
    }
    let last = records.last().unwrap().0;
    let bins = ((last - first).num_minutes() / resolution_min as i64) as usize + 1;

    let mut temp = vec![f64::NAN; bins];
    let mut hum = vec![f64::NAN; bins];
    let mut rec_idx = 0usize;
    for b in 0..bins {
        let ts = first + step * b as i32;
        while rec_idx + 1 < records.len() && records[rec_idx + 1].0 <= ts {
            rec_idx += 1;
        }
        let (rts, t, h) = records[rec_idx];
        // Forward-fill: a record covers the bins within the hour after it.
        if rts <= ts && (ts - rts).num_minutes() < 60 {
            temp[b] = t;
            hum[b] = h;
        }
    }
    Ok((
        TimeSeries::new(first, resolution_min, temp)?,
        TimeSeries::new(first, resolution_min, hum)?,
    ))
}

pub fn write_weather_csv(path: &Path, temp: &TimeSeries, hum: &TimeSeries) -> Result<()> {
    if temp.start != hum.start || temp.len() != hum.len() || temp.resolution_min != hum.resolution_min
    {
        return Err(Error::Data("temperature and humidity series are misaligned".into()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer
        .write_record(["timestamp", "temperature_c", "humidity_pct"])
        .map_err(Error::from)?;
    for i in 0..temp.len() {
        writer
            .write_record([
                temp.timestamp(i).format("%Y-%m-%dT%H:%M:%S").to_string(),
                format!("{}", temp.values[i]),
                format!("{}", hum.values[i]),
            ])
            .map_err(Error::from)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hourly_rows_forward_fill_to_quarter_hours() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.csv");
        std::fs::write(
            &path,
            "timestamp,temperature_c,humidity_pct\n\
             2018-06-01T00:00:00,18.5,60\n\
             2018-06-01T01:00:00,17.0,65\n",
        )
        .unwrap();
        let (temp, hum) = read_weather_csv(&path, 15).unwrap();
        assert_eq!(temp.len(), 5);
        assert_eq!(&temp.values[..4], &[18.5, 18.5, 18.5, 18.5]);
        assert_eq!(temp.values[4], 17.0);
        assert_eq!(hum.values[3], 60.0);
    }

    #[test]
    fn gaps_longer_than_an_hour_become_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.csv");
        std::fs::write(
            &path,
            "timestamp,temperature_c,humidity_pct\n\
             2018-06-01T00:00:00,18.5,60\n\
             2018-06-01T03:00:00,16.0,70\n",
        )
        .unwrap();
        let (temp, _) = read_weather_csv(&path, 60).unwrap();
        assert_eq!(temp.len(), 4);
        assert_eq!(temp.values[0], 18.5);
        assert!(temp.values[1].is_nan());
        assert!(temp.values[2].is_nan());
        assert_eq!(temp.values[3], 16.0);
    }

    #[test]
    fn round_trip_at_native_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.csv");
        let start = parse_timestamp("2018-06-01T00:00:00").unwrap();
        let temp = TimeSeries::new(start, 15, vec![10.0, 11.0, 12.0, 13.0]).unwrap();
        let hum = TimeSeries::new(start, 15, vec![50.0, 51.0, 52.0, 53.0]).unwrap();
        write_weather_csv(&path, &temp, &hum).unwrap();
        let (t2, h2) = read_weather_csv(&path, 15).unwrap();
        assert_eq!(t2, temp);
        assert_eq!(h2, hum);
    }
}
