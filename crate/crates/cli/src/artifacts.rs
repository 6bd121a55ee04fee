//! Writers for run-directory artifacts: CSV tables, pretty JSON, and SVG
//! charts. All output is deterministic: floats print in shortest
//! round-trip form and charts are pure functions of their data.

use std::fs;
use std::path::Path;

use evireg_core::metrics::{CalibrationCurve, CutoffCurve, Histogram};
use evireg_core::{EviregError, Result};
use serde::Serialize;

use crate::eval::PointSummary;
use crate::svg::{Band, Bars, Chart, Series, PALETTE};
use crate::trainer::EpochStats;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| EviregError::io(dir.display().to_string(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| EviregError::io(path.display().to_string(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| EviregError::numeric(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes a CSV with a header row; cells are already formatted.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Per-epoch loss table.
pub fn write_train_log(path: &Path, log: &[EpochStats]) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                f(e.total),
                f(e.nll),
                f(e.evidence),
                f(e.escape),
            ]
        })
        .collect();
    write_csv(path, "epoch,total,nll,evidence,escape", &rows)
}

/// Prediction band table over the merged in/out-of-range grid. Saturated
/// points have no moment-based uncertainties and leave those cells empty.
pub fn write_pred_band_csv(path: &Path, band: &[PointSummary]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, f);
    let rows: Vec<Vec<String>> = band
        .iter()
        .map(|p| {
            vec![
                f(p.x),
                f(p.truth.unwrap_or(f64::NAN)),
                f(p.mean),
                opt(p.aleatoric),
                opt(p.epistemic),
            ]
        })
        .collect();
    write_csv(path, "x,truth,mean,aleatoric,epistemic", &rows)
}

/// Prediction-band chart: truth, predicted mean, and a two-standard-
/// deviation band of the total predictive variance where it exists.
pub fn write_pred_band_svg(path: &Path, band: &[PointSummary]) -> Result<()> {
    let mut chart = Chart::new(
        "prediction band",
        "x",
        "y",
    );
    let mut upper = Vec::with_capacity(band.len());
    let mut lower = Vec::with_capacity(band.len());
    for p in band {
        let (Some(aleatoric), Some(epistemic)) = (p.aleatoric, p.epistemic) else {
            continue;
        };
        let sd = (aleatoric + epistemic).sqrt();
        // Keep the chart readable when the band explodes out of range.
        let half = (2.0 * sd).min(500.0);
        upper.push((p.x, p.mean + half));
        lower.push((p.x, p.mean - half));
    }
    chart.bands.push(Band {
        label: "mean +/- 2 sd".to_string(),
        color: PALETTE[0],
        upper,
        lower,
    });
    chart.lines.push(Series {
        label: "truth".to_string(),
        color: PALETTE[5],
        points: band
            .iter()
            .filter_map(|p| p.truth.map(|t| (p.x, t)))
            .collect(),
    });
    chart.lines.push(Series {
        label: "predicted mean".to_string(),
        color: PALETTE[1],
        points: band.iter().map(|p| (p.x, p.mean)).collect(),
    });
    write_text(path, &chart.render())
}

pub fn write_cutoff_csv(path: &Path, curve: &CutoffCurve) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .retained_fractions
        .iter()
        .zip(&curve.rmse_at_fraction)
        .map(|(&frac, &rmse)| vec![f(frac), f(rmse)])
        .collect();
    write_csv(path, "retained_fraction,rmse", &rows)
}

pub fn write_cutoff_svg(path: &Path, curve: &CutoffCurve) -> Result<()> {
    let mut chart = Chart::new(
        "confidence cutoff",
        "retained fraction (by epistemic uncertainty)",
        "rmse",
    );
    chart.lines.push(Series {
        label: "rmse".to_string(),
        color: PALETTE[0],
        points: curve
            .retained_fractions
            .iter()
            .zip(&curve.rmse_at_fraction)
            .map(|(&x, &y)| (x, y))
            .collect(),
    });
    write_text(path, &chart.render())
}

pub fn write_calibration_csv(path: &Path, curve: &CalibrationCurve) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .expected_levels
        .iter()
        .zip(&curve.observed_frequencies)
        .map(|(&e, &o)| vec![f(e), f(o)])
        .collect();
    write_csv(path, "expected,observed", &rows)
}

pub fn write_calibration_svg(path: &Path, curve: &CalibrationCurve) -> Result<()> {
    let mut chart = Chart::new("calibration", "expected coverage", "observed coverage");
    chart.lines.push(Series {
        label: "ideal".to_string(),
        color: PALETTE[5],
        points: vec![(0.0, 0.0), (1.0, 1.0)],
    });
    chart.lines.push(Series {
        label: "observed".to_string(),
        color: PALETTE[0],
        points: curve
            .expected_levels
            .iter()
            .zip(&curve.observed_frequencies)
            .map(|(&x, &y)| (x, y))
            .collect(),
    });
    write_text(path, &chart.render())
}

/// Histogram table with explicit out-of-range rows.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(hist.counts.len() + 2);
    rows.push(vec![
        "-inf".to_string(),
        f(hist.edges[0]),
        hist.underflow.to_string(),
    ]);
    for (i, &count) in hist.counts.iter().enumerate() {
        rows.push(vec![
            f(hist.edges[i]),
            f(hist.edges[i + 1]),
            count.to_string(),
        ]);
    }
    rows.push(vec![
        f(hist.edges[hist.edges.len() - 1]),
        "inf".to_string(),
        hist.overflow.to_string(),
    ]);
    write_csv(path, "bin_lo,bin_hi,count", &rows)
}

fn histogram_bars(hist: &Histogram, label: &str, color: &'static str) -> Bars {
    Bars {
        label: label.to_string(),
        color,
        bars: hist
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (hist.edges[i], hist.edges[i + 1], c as f64))
            .collect(),
    }
}

/// In-range and out-of-range predictive-entropy histograms in one chart.
pub fn write_entropy_svg(path: &Path, id: &Histogram, ood: &Histogram) -> Result<()> {
    let mut chart = Chart::new(
        "predictive entropy",
        "entropy (nats)",
        "count",
    );
    chart.bars.push(histogram_bars(id, "in range", PALETTE[0]));
    chart.bars.push(histogram_bars(ood, "out of range", PALETTE[1]));
    write_text(path, &chart.render())
}

/// Degrees-of-freedom scatter against the angle, with the saturation floor.
pub fn write_nu_scatter_csv(path: &Path, scatter: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<Vec<String>> = scatter.iter().map(|&(t, nu)| vec![f(t), f(nu)]).collect();
    write_csv(path, "t,nu", &rows)
}

pub fn write_nu_scatter_svg(path: &Path, scatter: &[(f64, f64)]) -> Result<()> {
    let mut chart = Chart::new("degrees of freedom by angle", "t (radians)", "nu");
    let (t_min, t_max) = scatter.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &(t, _)| {
        (acc.0.min(t), acc.1.max(t))
    });
    chart.lines.push(Series {
        label: "saturation floor (nu = 3)".to_string(),
        color: PALETTE[5],
        points: vec![(t_min, 3.0), (t_max, 3.0)],
    });
    chart.scatter.push(Series {
        label: "nu".to_string(),
        color: PALETTE[0],
        points: scatter.to_vec(),
    });
    write_text(path, &chart.render())
}

/// Escape-weight sweep table.
pub fn write_sensitivity_csv(
    path: &Path,
    rows: &[(f64, f64, f64, f64, f64)],
) -> Result<()> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|&(l1, rmse, nll, cal, ratio)| {
            vec![f(l1), f(rmse), f(nll), f(cal), f(ratio)]
        })
        .collect();
    write_csv(
        path,
        "lambda1,rmse_to_truth,predictive_nll,calibration_error,epistemic_ratio",
        &table,
    )
}

pub fn write_sensitivity_svg(path: &Path, rows: &[(f64, f64, f64, f64, f64)]) -> Result<()> {
    let mut chart = Chart::new(
        "escape-weight sensitivity",
        "log10(lambda1)",
        "calibration error",
    );
    chart.lines.push(Series {
        label: "calibration error".to_string(),
        color: PALETTE[0],
        points: rows.iter().map(|&(l1, _, _, cal, _)| (l1.log10(), cal)).collect(),
    });
    write_text(path, &chart.render())
}
