//! Command implementations behind the CLI subcommands. Each command takes a
//! validated config and a resolved output directory and fills the run
//! directory with its artifacts.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use evireg_core::data::{export_csv, load_csv, Dataset, SplitConfig};
use evireg_core::net::{load_checkpoint, save_checkpoint, Checkpoint};
use evireg_core::{grad_head, EviregError, Result};
use serde::Serialize;

use crate::artifacts::{self, ensure_dir, write_json};
use crate::config::{apply_variant, DataConfig, Experiment, RunConfig, Variant};
use crate::eval::{
    aggregate_tabular, evaluate_circle, evaluate_cubic, training_set, CircleMetrics,
    CubicMetrics, TabularMetrics,
};
use crate::gradcheck::{run_gradcheck, GradcheckReport};
use crate::sensitivity::run_sensitivity;
use crate::trainer::{train, TrainOutcome};

/// One comparison row of the saturated-start demo.
#[derive(Debug, Clone, Serialize)]
pub struct HuaDemoRow {
    pub variant: String,
    pub fraction_in_hua: f64,
    pub rmse_to_truth_id: f64,
    pub epistemic_ratio: Option<f64>,
}

fn ratio_display(ratio: Option<f64>) -> String {
    ratio.map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}"))
}

fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    artifacts::write_text(&dir.join("config.json"), &(cfg.to_pretty_json()? + "\n"))
}

fn save_model(dir: &Path, cfg: &RunConfig, outcome: &TrainOutcome, name: &str) -> Result<()> {
    let checkpoint = Checkpoint::new(&cfg.model, &outcome.weights, &outcome.adam);
    save_checkpoint(&dir.join(name), &checkpoint)
}

fn cubic_artifacts(dir: &Path, eval: &crate::eval::CubicEvaluation) -> Result<()> {
    artifacts::write_pred_band_csv(&dir.join("pred_band.csv"), &eval.band)?;
    artifacts::write_pred_band_svg(&dir.join("pred_band.svg"), &eval.band)?;
    if let Some(cutoff) = &eval.metrics.cutoff {
        artifacts::write_cutoff_csv(&dir.join("cutoff.csv"), cutoff)?;
        artifacts::write_cutoff_svg(&dir.join("cutoff.svg"), cutoff)?;
    }
    artifacts::write_calibration_csv(&dir.join("calibration.csv"), &eval.metrics.calibration)?;
    artifacts::write_calibration_svg(&dir.join("calibration.svg"), &eval.metrics.calibration)?;
    write_entropy_artifacts(dir, eval)?;
    Ok(())
}

fn write_entropy_artifacts(dir: &Path, eval: &crate::eval::CubicEvaluation) -> Result<()> {
    artifacts::write_histogram_csv(&dir.join("entropy_id.csv"), &eval.metrics.entropy_id)?;
    artifacts::write_histogram_csv(&dir.join("entropy_ood.csv"), &eval.metrics.entropy_ood)?;
    artifacts::write_entropy_svg(
        &dir.join("entropy.svg"),
        &eval.metrics.entropy_id,
        &eval.metrics.entropy_ood,
    )
}

/// Trains on the cubic task and fills `dir`. Returns the metrics so the
/// saturated-start demo can aggregate across variants. Training happens in
/// z-scored space; artifacts and metrics are in original units.
fn train_cubic_run(cfg: &RunConfig, dir: &Path) -> Result<CubicMetrics> {
    ensure_dir(dir)?;
    write_snapshot(cfg, dir)?;
    let data = training_set(cfg)?;
    export_csv(&data, &dir.join("train_data.csv"))?;
    let scale = crate::eval::scalar_scale(&data)?;
    let outcome = train(cfg, &crate::eval::standardize_dataset(&data, &scale))?;
    save_model(dir, cfg, &outcome, "checkpoint.json")?;
    artifacts::write_train_log(&dir.join("train_log.csv"), &outcome.log)?;
    let eval = evaluate_cubic(cfg, &outcome.weights)?;
    write_json(&dir.join("metrics.json"), &eval.metrics)?;
    cubic_artifacts(dir, &eval)?;
    println!(
        "[{}] rmse(truth) {:.4}  calibration {:.4}  in-saturation {:.3}  epistemic ood/id {}",
        cfg.loss.variant,
        eval.metrics.rmse_to_truth_id,
        eval.metrics.calibration_error,
        eval.metrics.hua.fraction_in_hua,
        ratio_display(eval.metrics.epistemic_ratio)
    );
    Ok(eval.metrics)
}

fn train_circle_run(cfg: &RunConfig, dir: &Path) -> Result<CircleMetrics> {
    ensure_dir(dir)?;
    write_snapshot(cfg, dir)?;
    let data = training_set(cfg)?;
    export_csv(&data, &dir.join("train_data.csv"))?;
    let outcome = train(cfg, &data)?;
    save_model(dir, cfg, &outcome, "checkpoint.json")?;
    artifacts::write_train_log(&dir.join("train_log.csv"), &outcome.log)?;
    let eval = evaluate_circle(cfg, &outcome.weights)?;
    write_json(&dir.join("metrics.json"), &eval.metrics)?;
    artifacts::write_nu_scatter_csv(&dir.join("nu_scatter.csv"), &eval.nu_scatter)?;
    artifacts::write_nu_scatter_svg(&dir.join("nu_scatter.svg"), &eval.nu_scatter)?;
    println!(
        "[{}] mean nu {:.4}  mean(nu - 3) {:.3e}  saturated {:.3}",
        cfg.loss.variant,
        eval.metrics.mean_nu,
        eval.metrics.mean_nu_minus_3,
        eval.metrics.saturated_fraction
    );
    Ok(eval.metrics)
}

/// Zero-based index of the last column of a CSV header line.
fn csv_last_column(path: &Path) -> Result<usize> {
    let file = std::fs::File::open(path).map_err(|e| EviregError::io(path.display().to_string(), e))?;
    let mut header = String::new();
    std::io::BufReader::new(file)
        .read_line(&mut header)
        .map_err(|e| EviregError::io(path.display().to_string(), e))?;
    let cols = header.trim_end().split(',').count();
    if cols < 2 {
        return Err(EviregError::invalid_input(format!(
            "{} needs at least two columns, found {cols}",
            path.display()
        )));
    }
    Ok(cols - 1)
}

/// Loads the configured CSV splits, resolving an empty target list to the
/// last column.
fn tabular_splits(cfg: &RunConfig) -> Result<(Vec<(Dataset, Dataset)>, Vec<String>)> {
    let DataConfig::Tabular {
        csv_path,
        target_cols,
        train_frac,
        repeats,
        seed,
    } = &cfg.data
    else {
        return Err(EviregError::invalid_input(
            "tabular command needs tabular data".to_string(),
        ));
    };
    let path = PathBuf::from(csv_path);
    let targets = if target_cols.is_empty() {
        vec![csv_last_column(&path)?]
    } else {
        target_cols.clone()
    };
    let split = SplitConfig {
        train_frac: *train_frac,
        repeats: *repeats,
        seed: *seed,
    };
    let splits = load_csv(&path, &targets, &split)?;
    Ok((splits.splits, splits.warnings))
}

fn train_tabular_run(cfg: &RunConfig, dir: &Path) -> Result<TabularMetrics> {
    ensure_dir(dir)?;
    write_snapshot(cfg, dir)?;
    let (splits, warnings) = tabular_splits(cfg)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut repeats = Vec::with_capacity(splits.len());
    for (r, (train_set, test_set)) in splits.iter().enumerate() {
        let mut run = cfg.clone();
        // The loader may drop constant feature columns, so the width comes
        // from the data; each repeat gets its own init stream.
        run.model.input_dim = train_set.input_dim();
        run.model.seed = cfg.model.seed.wrapping_add(r as u64);
        run.validate()?;
        if r == 0 {
            export_csv(train_set, &dir.join("train_data-r0.csv"))?;
            export_csv(test_set, &dir.join("test_data-r0.csv"))?;
        }
        let outcome = train(&run, train_set)?;
        save_model(dir, &run, &outcome, &format!("checkpoint-r{r}.json"))?;
        artifacts::write_train_log(&dir.join(format!("train_log-r{r}.csv")), &outcome.log)?;
        let metrics =
            crate::eval::evaluate_tabular_repeat(&run, &outcome.weights, r, train_set, test_set)?;
        println!(
            "[repeat {r}] rmse {:.4}  nll {:.4}  calibration {:.4}",
            metrics.rmse_test, metrics.predictive_nll_test, metrics.calibration_error
        );
        repeats.push(metrics);
    }
    let aggregate = aggregate_tabular(cfg, repeats);
    write_json(&dir.join("metrics.json"), &aggregate)?;
    println!(
        "mean rmse {:.4}  mean nll {:.4} over {} repeat(s)",
        aggregate.mean_rmse,
        aggregate.mean_predictive_nll,
        aggregate.repeats.len()
    );
    Ok(aggregate)
}

fn train_hua_demo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_snapshot(cfg, dir)?;
    let mut rows = Vec::new();
    for variant in [Variant::Ern, Variant::NllErn, Variant::UrErn] {
        let mut run = cfg.clone();
        run.experiment = Experiment::Cubic;
        apply_variant(&mut run, variant);
        run.output_dir = format!("{}/{}", cfg.output_dir, variant.slug());
        run.validate()?;
        let metrics = train_cubic_run(&run, &dir.join(variant.slug()))?;
        rows.push(HuaDemoRow {
            variant: variant.as_str().to_string(),
            fraction_in_hua: metrics.hua.fraction_in_hua,
            rmse_to_truth_id: metrics.rmse_to_truth_id,
            epistemic_ratio: metrics.epistemic_ratio,
        });
    }
    write_json(&dir.join("hua_demo.json"), &rows)?;
    Ok(())
}

/// `train`: fit the configured model and write the run directory.
pub fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    match cfg.experiment {
        Experiment::Cubic | Experiment::Tabular | Experiment::Circle | Experiment::HuaDemo => {}
        Experiment::Gradcheck => {
            return Err(EviregError::invalid_input(
                "the gradcheck experiment runs via the gradcheck subcommand".to_string(),
            ))
        }
        Experiment::Sensitivity => {
            return Err(EviregError::invalid_input(
                "the sensitivity experiment runs via the sensitivity subcommand".to_string(),
            ))
        }
    }
    match cfg.experiment {
        Experiment::Cubic => train_cubic_run(cfg, dir).map(|_| ()),
        Experiment::Circle => train_circle_run(cfg, dir).map(|_| ()),
        Experiment::Tabular => train_tabular_run(cfg, dir).map(|_| ()),
        Experiment::HuaDemo => train_hua_demo(cfg, dir),
        _ => unreachable!("rejected above"),
    }
}

fn load_weights_for(cfg: &RunConfig, path: &Path) -> Result<Checkpoint> {
    let checkpoint = load_checkpoint(path)?;
    if checkpoint.config != cfg.model {
        return Err(EviregError::invalid_input(format!(
            "checkpoint at {} was trained with a different architecture than the config",
            path.display()
        )));
    }
    Ok(checkpoint)
}

/// `eval`: recompute the metrics report from a checkpoint and the config's
/// regenerated datasets, into `<run>/eval/`. Byte-identical to the metrics
/// the training run wrote.
pub fn cmd_eval(cfg: &RunConfig, dir: &Path, checkpoint_override: Option<&Path>) -> Result<()> {
    let eval_dir = dir.join("eval");
    ensure_dir(&eval_dir)?;
    let default_ckpt = dir.join("checkpoint.json");
    let ckpt_path = checkpoint_override.unwrap_or(&default_ckpt);
    match cfg.experiment {
        Experiment::Cubic => {
            let checkpoint = load_weights_for(cfg, ckpt_path)?;
            let eval = evaluate_cubic(cfg, &checkpoint.weights())?;
            write_json(&eval_dir.join("metrics.json"), &eval.metrics)?;
            write_entropy_artifacts(&eval_dir, &eval)?;
            println!(
                "rmse(truth) {:.4}  calibration {:.4}  epistemic ood/id {}",
                eval.metrics.rmse_to_truth_id,
                eval.metrics.calibration_error,
                ratio_display(eval.metrics.epistemic_ratio)
            );
            Ok(())
        }
        Experiment::Circle => {
            let checkpoint = load_weights_for(cfg, ckpt_path)?;
            let eval = evaluate_circle(cfg, &checkpoint.weights())?;
            write_json(&eval_dir.join("metrics.json"), &eval.metrics)?;
            artifacts::write_nu_scatter_csv(&eval_dir.join("nu_scatter.csv"), &eval.nu_scatter)?;
            artifacts::write_nu_scatter_svg(&eval_dir.join("nu_scatter.svg"), &eval.nu_scatter)?;
            println!(
                "mean nu {:.4}  mean(nu - 3) {:.3e}",
                eval.metrics.mean_nu, eval.metrics.mean_nu_minus_3
            );
            Ok(())
        }
        Experiment::Tabular => {
            let (splits, _) = tabular_splits(cfg)?;
            let mut repeats = Vec::with_capacity(splits.len());
            for (r, (train_set, test_set)) in splits.iter().enumerate() {
                let mut run = cfg.clone();
                run.model.input_dim = train_set.input_dim();
                run.model.seed = cfg.model.seed.wrapping_add(r as u64);
                let path = if checkpoint_override.is_some() && splits.len() == 1 {
                    ckpt_path.to_path_buf()
                } else {
                    dir.join(format!("checkpoint-r{r}.json"))
                };
                let checkpoint = load_weights_for(&run, &path)?;
                repeats.push(crate::eval::evaluate_tabular_repeat(
                    &run,
                    &checkpoint.weights(),
                    r,
                    train_set,
                    test_set,
                )?);
            }
            let aggregate = aggregate_tabular(cfg, repeats);
            write_json(&eval_dir.join("metrics.json"), &aggregate)?;
            println!("mean rmse {:.4}", aggregate.mean_rmse);
            Ok(())
        }
        Experiment::HuaDemo => Err(EviregError::invalid_input(
            "evaluate the per-variant subdirectories of a hua-demo run, each of \
             which holds its own config snapshot"
                .to_string(),
        )),
        Experiment::Gradcheck | Experiment::Sensitivity => Err(EviregError::invalid_input(
            format!("the {} experiment has no checkpoints to evaluate", cfg.experiment.as_str()),
        )),
    }
}

/// `gradcheck`: run the verification suites, write the report, and return
/// the process exit code (0 clean, 3 on violation).
pub fn cmd_gradcheck(dir: &Path) -> Result<i32> {
    let report = run_gradcheck(grad_head)?;
    ensure_dir(dir)?;
    write_json(&dir.join("gradcheck_report.json"), &report)?;
    print_gradcheck(&report);
    Ok(if report.pass { 0 } else { 3 })
}

fn print_gradcheck(report: &GradcheckReport) {
    for suite in &report.fd {
        println!(
            "fd {:<8} probes {:>4}  worst rel err {:.3e} (tolerance {:.0e}){}",
            suite.activation,
            suite.probes,
            suite.max_rel_err.iter().cloned().fold(0.0, f64::max),
            suite.tolerance,
            if suite.failing_channels.is_empty() {
                "  ok".to_string()
            } else {
                format!("  FAIL: {}", suite.failing_channels.join(", "))
            }
        );
    }
    for row in &report.saturation {
        println!(
            "saturation {:<8} max |d_alpha| {:.3e} (bound {:.0e})  {}",
            row.activation,
            row.max_abs_grad_alpha,
            row.bound,
            if row.pass { "ok" } else { "FAIL" }
        );
    }
    println!(
        "escape exactness: {} ulp (bound {}), fd rel err {:.3e}  {}",
        report.escape.max_ulp,
        report.escape.ulp_bound,
        report.escape.max_fd_rel_err,
        if report.escape.pass { "ok" } else { "FAIL" }
    );
    println!(
        "multivariate: fd worst {:.3e}, saturated |d_p_nu| {:.3e}, escape {} ulp  {}",
        [
            report.multi.max_rel_err_mu,
            report.multi.max_rel_err_diag,
            report.multi.max_rel_err_lower,
            report.multi.max_rel_err_p_nu,
        ]
        .iter()
        .cloned()
        .fold(0.0, f64::max),
        report.multi.max_abs_grad_p_nu_saturated,
        report.multi.escape_max_ulp,
        if report.multi.pass { "ok" } else { "FAIL" }
    );
    println!("gradcheck: {}", if report.pass { "PASS" } else { "FAIL" });
}

/// `sensitivity`: sweep the escape weight and write the table.
pub fn cmd_sensitivity(cfg: &RunConfig, dir: &Path) -> Result<()> {
    if !matches!(
        cfg.experiment,
        Experiment::Sensitivity | Experiment::Cubic
    ) {
        return Err(EviregError::invalid_input(
            "the sensitivity sweep runs on the cubic task".to_string(),
        ));
    }
    ensure_dir(dir)?;
    write_snapshot(cfg, dir)?;
    let report = run_sensitivity(cfg)?;
    let rows: Vec<(f64, f64, f64, f64, f64)> = report
        .rows
        .iter()
        .map(|r| {
            (
                r.lambda1,
                r.rmse_to_truth,
                r.predictive_nll,
                r.calibration_error,
                r.epistemic_ratio,
            )
        })
        .collect();
    artifacts::write_sensitivity_csv(&dir.join("sensitivity.csv"), &rows)?;
    artifacts::write_sensitivity_svg(&dir.join("sensitivity.svg"), &rows)?;
    write_json(&dir.join("sensitivity.json"), &report)?;
    for r in &report.rows {
        println!(
            "lambda1 {:>9.4e}  rmse {:.4}  nll {:.4}  calibration {:.4}  epistemic ood/id {:.2}",
            r.lambda1, r.rmse_to_truth, r.predictive_nll, r.calibration_error, r.epistemic_ratio
        );
    }
    if let Some(check) = &report.soft_check {
        println!(
            "soft check (mid-range calibrates best): {} (mid {:.4} vs {:.4} / {:.4})",
            if check.holds { "holds" } else { "does not hold" },
            check.mid_calibration_error,
            check.low_calibration_error,
            check.high_calibration_error
        );
    }
    Ok(())
}
