//! Data pipeline: session/weather ingest, 15-min load aggregation, sliding
//! windows, normalization and the synthetic desk-scale corpus.

pub mod normalize;
pub mod series;
pub mod sessions;
pub mod synthetic;
pub mod weather;
pub mod windows;

pub use normalize::{NormalizationStats, NormalizedWindow};
pub use series::TimeSeries;
pub use sessions::{aggregate_sessions, count_evs, ChargingSession};
pub use windows::{build_windows, split_windows, ForecastWindow, WindowConfig};
