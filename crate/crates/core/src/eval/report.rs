//! Evaluation reports: per-sample rows, aggregate footer, CSV and text views.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metrics for one (model, test window) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub model: String,
    pub window_id: u64,
    pub anchor: String,
    pub mae: f64,
    pub crps: f64,
    pub coverage_50: f64,
    pub coverage_90: f64,
    pub width_90: f64,
    /// Quantile-crossing rate; only meaningful for the quantile baseline.
    pub crossing_rate: Option<f64>,
}

impl SampleRow {
    fn validate(&self) -> Result<()> {
        let coverages_ok = (0.0..=1.0).contains(&self.coverage_50)
            && (0.0..=1.0).contains(&self.coverage_90);
        let finite = self.mae.is_finite()
            && self.crps.is_finite()
            && self.width_90.is_finite()
            && self.crossing_rate.map_or(true, |c| c.is_finite());
        if !coverages_ok || !finite {
            return Err(Error::Data(format!(
                "invalid metrics row for model '{}', window {}",
                self.model, self.window_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub samples: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub crps_mean: f64,
    pub crps_std: f64,
    pub coverage_50_mean: f64,
    pub coverage_90_mean: f64,
    pub width_90_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<SampleRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_rows(rows: Vec<SampleRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("evaluation produced no rows".into()));
        }
        for row in &rows {
            row.validate()?;
        }
        let mut models: Vec<String> = Vec::new();
        for r in &rows {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        let aggregates = models
            .iter()
            .map(|m| {
                let group: Vec<&SampleRow> = rows.iter().filter(|r| &r.model == m).collect();
                let maes: Vec<f64> = group.iter().map(|r| r.mae).collect();
                let crpss: Vec<f64> = group.iter().map(|r| r.crps).collect();
                let (mae_mean, mae_std) = mean_std(&maes);
                let (crps_mean, crps_std) = mean_std(&crpss);
                AggregateRow {
                    model: m.clone(),
                    samples: group.len(),
                    mae_mean,
                    mae_std,
                    crps_mean,
                    crps_std,
                    coverage_50_mean: group.iter().map(|r| r.coverage_50).sum::<f64>() / group.len() as f64,
                    coverage_90_mean: group.iter().map(|r| r.coverage_90).sum::<f64>() / group.len() as f64,
                    width_90_mean: group.iter().map(|r| r.width_90).sum::<f64>() / group.len() as f64,
                }
            })
            .collect();
        Ok(Self { rows, aggregates })
    }

    /// Per-sample rows plus an aggregate footer. The effective run config is
    /// embedded as a leading comment line.
    pub fn to_csv(&self, effective_config_json: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config = {effective_config_json}\n"));
        out.push_str("model,window_id,anchor,mae,crps,coverage_50,coverage_90,width_90,crossing_rate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.model,
                r.window_id,
                r.anchor,
                r.mae,
                r.crps,
                r.coverage_50,
                r.coverage_90,
                r.width_90,
                r.crossing_rate.map_or(String::new(), |c| c.to_string()),
            ));
        }
        out.push_str("# aggregate: model,samples,mae_mean,mae_std,crps_mean,crps_std,coverage_50,coverage_90,width_90\n");
        for a in &self.aggregates {
            out.push_str(&format!(
                "# {},{},{},{},{},{},{},{},{}\n",
                a.model,
                a.samples,
                a.mae_mean,
                a.mae_std,
                a.crps_mean,
                a.crps_std,
                a.coverage_50_mean,
                a.coverage_90_mean,
                a.width_90_mean,
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("evaluation summary\n");
        for a in &self.aggregates {
            out.push_str(&format!(
                "  {:<24} n={:<4} MAE {:.3} +/- {:.3} kW   CRPS {:.3} +/- {:.3} kW   cov50 {:.2} cov90 {:.2} width90 {:.2} kW\n",
                a.model,
                a.samples,
                a.mae_mean,
                a.mae_std,
                a.crps_mean,
                a.crps_std,
                a.coverage_50_mean,
                a.coverage_90_mean,
                a.width_90_mean,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, mae: f64) -> SampleRow {
        SampleRow {
            model: model.into(),
            window_id: 1,
            anchor: "2019-01-06T00:00:00".into(),
            mae,
            crps: mae * 0.7,
            coverage_50: 0.5,
            coverage_90: 0.9,
            width_90: 3.0,
            crossing_rate: None,
        }
    }

    #[test]
    fn aggregates_group_by_model() {
        let report = EvalReport::from_rows(vec![row("a", 1.0), row("a", 3.0), row("b", 2.0)]).unwrap();
        assert_eq!(report.aggregates.len(), 2);
        let a = &report.aggregates[0];
        assert_eq!(a.model, "a");
        assert_eq!(a.samples, 2);
        assert!((a.mae_mean - 2.0).abs() < 1e-12);
        assert!((a.mae_std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_coverage_is_rejected() {
        let mut bad = row("a", 1.0);
        bad.coverage_50 = 1.5;
        assert!(EvalReport::from_rows(vec![bad]).is_err());
    }

    #[test]
    fn csv_embeds_the_config_and_footer() {
        let report = EvalReport::from_rows(vec![row("a", 1.0)]).unwrap();
        let csv = report.to_csv("{\"seed\":7}");
        assert!(csv.starts_with("# config = {\"seed\":7}\n"));
        assert!(csv.contains("model,window_id"));
        assert!(csv.contains("# aggregate:"));
    }
}
