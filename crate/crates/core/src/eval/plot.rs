//! Minimal SVG band plots: truth line, 50%/90% prediction bands and median.

use crate::eval::ForecastEnsemble;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 45.0;

fn scale_x(j: usize, tau: usize) -> f64 {
    MARGIN + (WIDTH - 2.0 * MARGIN) * j as f64 / (tau.saturating_sub(1).max(1)) as f64
}

fn polyline(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders a per-sample fan chart. `truth` may be empty for pure forecasts.
pub fn render_band_svg(ensemble: &ForecastEnsemble, truth: &[f64], title: &str) -> String {
    let tau = ensemble.horizon();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for track in &ensemble.quantile_tracks {
        for &v in track {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    for &v in truth {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let scale_y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let band = |low_track: &[f64], high_track: &[f64]| -> String {
        let mut pts: Vec<(f64, f64)> = low_track
            .iter()
            .enumerate()
            .map(|(j, &v)| (scale_x(j, tau), scale_y(v)))
            .collect();
        pts.extend(
            high_track
                .iter()
                .enumerate()
                .rev()
                .map(|(j, &v)| (scale_x(j, tau), scale_y(v))),
        );
        polyline(&pts)
    };

    let q05 = ensemble.track(0.05).unwrap_or(&[]);
    let q25 = ensemble.track(0.25).unwrap_or(&[]);
    let q75 = ensemble.track(0.75).unwrap_or(&[]);
    let q95 = ensemble.track(0.95).unwrap_or(&[]);
    let median_pts: Vec<(f64, f64)> = ensemble
        .median
        .iter()
        .enumerate()
        .map(|(j, &v)| (scale_x(j, tau), scale_y(v)))
        .collect();
    let truth_pts: Vec<(f64, f64)> = truth
        .iter()
        .enumerate()
        .map(|(j, &v)| (scale_x(j, tau), scale_y(v)))
        .collect();

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n"
    ));
    svg.push_str(&format!(
        "<polygon points=\"{}\" fill=\"#aecbe8\" stroke=\"none\" opacity=\"0.6\"/>\n",
        band(q05, q95)
    ));
    svg.push_str(&format!(
        "<polygon points=\"{}\" fill=\"#5b93c9\" stroke=\"none\" opacity=\"0.6\"/>\n",
        band(q25, q75)
    ));
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f4e79\" stroke-width=\"2\"/>\n",
        polyline(&median_pts)
    ));
    if !truth_pts.is_empty() {
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#c23b22\" stroke-width=\"2\" stroke-dasharray=\"5,3\"/>\n",
            polyline(&truth_pts)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">kW range [{lo:.1}, {hi:.1}]</text>\n",
        HEIGHT - 12.0
    ));
    svg.push_str("</svg>\n");
    svg
}
