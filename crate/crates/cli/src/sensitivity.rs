//! Escape-weight sweep: trains the UR variant at several `lambda1` values
//! with identical seeds everywhere else, so rows differ only in the weight.

use evireg_core::Result;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, RunConfig, Variant};
use crate::eval::evaluate_cubic;
use crate::trainer::train;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub lambda1: f64,
    pub rmse_to_truth: f64,
    pub predictive_nll: f64,
    pub calibration_error: f64,
    pub epistemic_ratio: f64,
}

/// Soft expectation: the mid-range weight should calibrate at least as well
/// as both extremes. Logged, never fatal — small budgets wobble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftCheck {
    pub mid_lambda1: f64,
    pub mid_calibration_error: f64,
    pub low_calibration_error: f64,
    pub high_calibration_error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    pub soft_check: Option<SoftCheck>,
}

/// Runs the sweep over the configured grid, ascending.
pub fn run_sensitivity(cfg: &RunConfig) -> Result<SensitivityReport> {
    let mut grid = cfg.lambda1_grid();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("grid entries are finite"));

    let mut rows = Vec::with_capacity(grid.len());
    for &lambda1 in &grid {
        let mut run = cfg.clone();
        run.experiment = Experiment::Cubic;
        run.loss.variant = Variant::UrErn;
        run.loss.lambda1 = lambda1;
        run.validate()?;
        let data = crate::eval::training_set(&run)?;
        let scale = crate::eval::scalar_scale(&data)?;
        let outcome = train(&run, &crate::eval::standardize_dataset(&data, &scale))?;
        let eval = evaluate_cubic(&run, &outcome.weights)?;
        rows.push(SensitivityRow {
            lambda1,
            rmse_to_truth: eval.metrics.rmse_to_truth_id,
            predictive_nll: eval.metrics.predictive_nll_id,
            calibration_error: eval.metrics.calibration_error,
            epistemic_ratio: eval.metrics.epistemic_ratio.unwrap_or(f64::NAN),
        });
    }

    let soft_check = if rows.len() >= 3 {
        let mid = &rows[rows.len() / 2];
        let lo = &rows[0];
        let hi = &rows[rows.len() - 1];
        Some(SoftCheck {
            mid_lambda1: mid.lambda1,
            mid_calibration_error: mid.calibration_error,
            low_calibration_error: lo.calibration_error,
            high_calibration_error: hi.calibration_error,
            holds: mid.calibration_error <= lo.calibration_error
                && mid.calibration_error <= hi.calibration_error,
        })
    } else {
        None
    };

    Ok(SensitivityReport { rows, soft_check })
}
