//! Model evaluation: regenerates the configured datasets deterministically,
//! runs the network over them, and produces the metrics report.
//!
//! Training and the standalone eval command share this module, so a run
//! directory's metrics file is exactly reproducible from its checkpoint and
//! config snapshot alone.

use evireg_core::data::{gen_circle, gen_cubic, gen_cubic_id_grid, Dataset};
use evireg_core::metrics::{
    calibration, cutoff_curve, default_calibration_levels, entropy, entropy_histogram,
    hua_escape_report, predictive_nll, predictive_nll_original_units, rmse, CalibrationCurve,
    CutoffCurve, Histogram, HuaEscapeReport,
};
use evireg_core::net::{forward, MlpWeights};
use evireg_core::nig::{activate_head, predict, NigParams, RawHead, DEFAULT_HUA_EPSILON};
use evireg_core::{
    mern_nll, predict_multi, transform_multi, EviregError, RawHeadM, Result,
};
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, RunConfig};

/// Points in the in-range evaluation grid.
pub const ID_GRID_POINTS: usize = 401;
/// Offset added to the data seed when drawing the grid's observation noise,
/// so the grid is independent of the training draw but still reproducible.
pub const ID_GRID_SEED_OFFSET: u64 = 101;
/// Fixed predictive-entropy histogram range (nats) and bin count.
pub const ENTROPY_HIST_LO: f64 = -2.0;
pub const ENTROPY_HIST_HI: f64 = 16.0;
pub const ENTROPY_HIST_BINS: usize = 36;
/// A head counts as saturated when `nu - 3` is below this.
pub const NU_SATURATION_EPSILON: f64 = 1e-3;

/// One evaluated point of a scalar-target model. The moment-based
/// uncertainties are undefined while the head is saturated (`alpha <= 1`),
/// so they are optional.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub x: f64,
    pub truth: Option<f64>,
    pub target: f64,
    pub mean: f64,
    pub aleatoric: Option<f64>,
    pub epistemic: Option<f64>,
}

/// Metrics report for the scalar pipelines, serialized as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicMetrics {
    pub variant: String,
    pub n_id: usize,
    pub n_ood: usize,
    /// RMSE of the predicted mean against the noise-free curve, in range.
    pub rmse_to_truth_id: f64,
    /// RMSE against the noisy observations, in range.
    pub rmse_to_noisy_id: f64,
    pub predictive_nll_id: f64,
    pub calibration_error: f64,
    /// Means over the points where the moments exist; `null` when the whole
    /// set is saturated.
    pub mean_aleatoric_id: Option<f64>,
    pub mean_epistemic_id: Option<f64>,
    pub mean_epistemic_ood: Option<f64>,
    /// `mean_epistemic_ood / mean_epistemic_id`.
    pub epistemic_ratio: Option<f64>,
    pub hua: HuaEscapeReport,
    pub calibration: CalibrationCurve,
    /// `null` when any in-range point is saturated (no uncertainty ordering).
    pub cutoff: Option<CutoffCurve>,
    pub entropy_id: Histogram,
    pub entropy_ood: Histogram,
}

/// Everything the cubic artifacts need beyond the metrics themselves.
#[derive(Debug, Clone)]
pub struct CubicEvaluation {
    pub metrics: CubicMetrics,
    /// In-range and out-of-range points merged and sorted by `x`.
    pub band: Vec<PointSummary>,
    pub entropies_id: Vec<f64>,
    pub entropies_ood: Vec<f64>,
}

/// Metrics report for the circle experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleMetrics {
    pub variant: String,
    pub n_train: usize,
    pub train_mean_nll: f64,
    pub mean_nu: f64,
    pub mean_nu_minus_3: f64,
    pub min_nu: f64,
    pub max_nu: f64,
    /// Fraction of inputs with `nu - 3 < 1e-3`.
    pub saturated_fraction: f64,
    /// Inputs where the predictive covariances are undefined (`nu <= 3`).
    pub n_uncomputable: usize,
    pub median_aleatoric_trace: Option<f64>,
    pub mean_epistemic_trace: Option<f64>,
    /// Largest absolute entry of the reported experiment covariance.
    pub max_experiment_entry: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CircleEvaluation {
    pub metrics: CircleMetrics,
    /// `(t, nu)` per training input, in data order.
    pub nu_scatter: Vec<(f64, f64)>,
}

/// Per-repeat tabular metrics, reported in the target's original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularRepeatMetrics {
    pub repeat: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse_test: f64,
    pub predictive_nll_test: f64,
    pub calibration_error: f64,
    pub mean_epistemic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMetrics {
    pub variant: String,
    pub repeats: Vec<TabularRepeatMetrics>,
    pub mean_rmse: f64,
    pub mean_predictive_nll: f64,
}

/// Regenerates the cubic evaluation sets from the config: the in-range grid
/// (fresh noise, fixed seed offset) and the out-of-range band.
pub fn cubic_eval_sets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let DataConfig::Cubic {
        n_train,
        noise_std,
        seed,
    } = cfg.data
    else {
        return Err(EviregError::invalid_input(
            "cubic evaluation needs cubic data".to_string(),
        ));
    };
    let id = gen_cubic_id_grid(ID_GRID_POINTS, seed.wrapping_add(ID_GRID_SEED_OFFSET), noise_std)?;
    let (_, ood) = gen_cubic(n_train, seed, noise_std)?;
    Ok((id, ood))
}

/// Z-score statistics of a scalar-input, scalar-target training set. The
/// scalar pipelines train in this standardized space: unit-scale errors keep
/// the constant-gradient escape term commensurate with the likelihood's
/// restoring forces, and unit-scale inputs keep bounded hidden units
/// responsive beyond the training range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarScale {
    pub x_mean: f64,
    pub x_std: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

impl ScalarScale {
    pub fn x(&self, x: f64) -> f64 {
        (x - self.x_mean) / self.x_std
    }
}

fn column_stats(rows: &[Vec<f64>], what: &str) -> Result<(f64, f64)> {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[0]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[0] - mean) * (r[0] - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0 && std.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "{what} standard deviation must be positive and finite, got {std}"
        )));
    }
    Ok((mean, std))
}

/// Training-set scaling statistics for the scalar pipelines: max-abs scaling
/// for the input (so the training range maps into [-1, 1] and points beyond
/// it stay inside the responsive range of bounded hidden units) and z-scoring
/// for the target.
pub fn scalar_scale(data: &Dataset) -> Result<ScalarScale> {
    if data.is_empty() || data.input_dim() != 1 || data.target_dim() != 1 {
        return Err(EviregError::invalid_input(
            "standardization needs a non-empty scalar-input, scalar-target dataset".to_string(),
        ));
    }
    let x_max = data
        .inputs
        .iter()
        .map(|r| 2.0 * r[0].abs())
        .fold(0.0_f64, f64::max);
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "input scale must be positive and finite, got {x_max}"
        )));
    }
    let (y_mean, y_std) = column_stats(&data.targets, "target")?;
    Ok(ScalarScale {
        x_mean: 0.0,
        x_std: x_max,
        y_mean,
        y_std,
    })
}

/// Copy of the dataset with z-scored inputs and targets (and noise-free
/// targets, when present).
pub fn standardize_dataset(data: &Dataset, scale: &ScalarScale) -> Dataset {
    let z = |rows: &[Vec<f64>], m: f64, s: f64| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| (v - m) / s).collect())
            .collect()
    };
    Dataset {
        inputs: z(&data.inputs, scale.x_mean, scale.x_std),
        targets: z(&data.targets, scale.y_mean, scale.y_std),
        noiseless: data
            .noiseless
            .as_deref()
            .map(|t| z(t, scale.y_mean, scale.y_std)),
        meta: data.meta.clone(),
    }
}

/// The z-score statistics the cubic training pipeline uses, recomputed from
/// the regenerated training set so evaluation never needs the original run.
pub fn cubic_standardization(cfg: &RunConfig) -> Result<ScalarScale> {
    scalar_scale(&training_set(cfg)?)
}

/// Maps NIG parameters fitted in z-scored target space back to original
/// units: `gamma` shifts and scales, `beta` picks up the variance factor,
/// and the dimensionless `v` and `alpha` are untouched. Every derived
/// quantity (moments, marginal Student-t, z-scores) then comes out in
/// original units.
fn unstandardize_params(p: &NigParams, mean: f64, std: f64) -> NigParams {
    NigParams {
        gamma: mean + std * p.gamma,
        v: p.v,
        alpha: p.alpha,
        beta: std * std * p.beta,
    }
}

/// Regenerates the training dataset described by the config.
pub fn training_set(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataConfig::Cubic {
            n_train,
            noise_std,
            seed,
        } => Ok(gen_cubic(*n_train, *seed, *noise_std)?.0),
        DataConfig::Circle {
            n,
            noise_std,
            literal_transform,
            seed,
        } => gen_circle(*n, *seed, *noise_std, *literal_transform),
        DataConfig::Tabular { .. } => Err(EviregError::invalid_input(
            "tabular training sets come from the CSV splits".to_string(),
        )),
        DataConfig::None {} => Err(EviregError::invalid_input(
            "this experiment has no dataset".to_string(),
        )),
    }
}

fn head_params(
    weights: &MlpWeights,
    cfg: &RunConfig,
    x: &[f64],
) -> Result<NigParams> {
    let (out, _) = forward(weights, cfg.model.hidden_activation, x)?;
    if out.len() != 4 {
        return Err(EviregError::shape(format!(
            "scalar evaluation needs a 4-channel head, got {}",
            out.len()
        )));
    }
    let raw = RawHead::from_array([out[0], out[1], out[2], out[3]]);
    activate_head(&raw, cfg.loss.activation)
}

fn summarize_points(
    weights: &MlpWeights,
    cfg: &RunConfig,
    data: &Dataset,
    scale: &ScalarScale,
) -> Result<(Vec<NigParams>, Vec<PointSummary>)> {
    let mut params = Vec::with_capacity(data.len());
    let mut points = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x_net = [scale.x(data.inputs[i][0])];
        let p = unstandardize_params(
            &head_params(weights, cfg, &x_net)?,
            scale.y_mean,
            scale.y_std,
        );
        let moments = predict(&p).ok();
        points.push(PointSummary {
            x: data.inputs[i][0],
            truth: data.noiseless.as_ref().map(|t| t[i][0]),
            target: data.targets[i][0],
            mean: p.gamma,
            aleatoric: moments.as_ref().map(|s| s.aleatoric),
            epistemic: moments.as_ref().map(|s| s.epistemic),
        });
        params.push(p);
    }
    Ok((params, points))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// Evaluates a scalar-head model on the cubic task. The model is assumed to
/// have been trained on the z-scored dataset (see [`standardize_dataset`]);
/// evaluation standardizes inputs the same way before each forward pass and
/// reports every quantity in original units.
pub fn evaluate_cubic(cfg: &RunConfig, weights: &MlpWeights) -> Result<CubicEvaluation> {
    let scale = cubic_standardization(cfg)?;
    let (id, ood) = cubic_eval_sets(cfg)?;
    let (id_params, id_points) = summarize_points(weights, cfg, &id, &scale)?;
    let (_, ood_points) = summarize_points(weights, cfg, &ood, &scale)?;

    let means: Vec<f64> = id_points.iter().map(|p| p.mean).collect();
    let truths: Vec<f64> = id_points.iter().map(|p| p.truth.unwrap()).collect();
    let noisy: Vec<f64> = id_points.iter().map(|p| p.target).collect();
    let fractions: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let cal = calibration(&id_params, &noisy, &default_calibration_levels())?;
    let cut = if id_params.iter().all(|p| p.alpha > 1.0) {
        Some(cutoff_curve(&id_params, &noisy, &fractions)?)
    } else {
        None
    };
    let id_net: Vec<Vec<f64>> = id.inputs.iter().map(|r| vec![scale.x(r[0])]).collect();
    let hua = hua_escape_report(
        weights,
        cfg.model.hidden_activation,
        cfg.loss.activation,
        &id_net,
        DEFAULT_HUA_EPSILON,
    )?;

    // Predictive entropy uses the marginal's total variance, which is
    // exactly aleatoric + epistemic; saturated points contribute nothing.
    let entropies = |pts: &[PointSummary]| -> Result<Vec<f64>> {
        pts.iter()
            .filter_map(|p| match (p.aleatoric, p.epistemic) {
                (Some(a), Some(e)) => Some(entropy(a + e)),
                _ => None,
            })
            .collect()
    };
    let entropies_id = entropies(&id_points)?;
    let entropies_ood = entropies(&ood_points)?;
    let hist = |values: &[f64]| {
        entropy_histogram(values, ENTROPY_HIST_LO, ENTROPY_HIST_HI, ENTROPY_HIST_BINS)
    };

    let mean_opt = |it: &mut dyn Iterator<Item = Option<f64>>| -> Option<f64> {
        let defined: Vec<f64> = it.flatten().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    };
    let mean_epistemic_id = mean_opt(&mut id_points.iter().map(|p| p.epistemic));
    let mean_epistemic_ood = mean_opt(&mut ood_points.iter().map(|p| p.epistemic));
    let metrics = CubicMetrics {
        variant: cfg.loss.variant.as_str().to_string(),
        n_id: id.len(),
        n_ood: ood.len(),
        rmse_to_truth_id: rmse(&means, &truths)?,
        rmse_to_noisy_id: rmse(&means, &noisy)?,
        predictive_nll_id: predictive_nll(&id_params, &noisy)?,
        calibration_error: cal.calibration_error,
        mean_aleatoric_id: mean_opt(&mut id_points.iter().map(|p| p.aleatoric)),
        mean_epistemic_id,
        mean_epistemic_ood,
        epistemic_ratio: match (mean_epistemic_id, mean_epistemic_ood) {
            (Some(id_mean), Some(ood_mean)) => Some(ood_mean / id_mean),
            _ => None,
        },
        hua,
        calibration: cal,
        cutoff: cut,
        entropy_id: hist(&entropies_id)?,
        entropy_ood: hist(&entropies_ood)?,
    };

    let mut band: Vec<PointSummary> = id_points.into_iter().chain(ood_points).collect();
    band.sort_by(|a, b| a.x.partial_cmp(&b.x).expect("grid points are finite"));
    Ok(CubicEvaluation {
        metrics,
        band,
        entropies_id,
        entropies_ood,
    })
}

/// Evaluates a bivariate-head model on the circle task over its own
/// training inputs.
pub fn evaluate_circle(cfg: &RunConfig, weights: &MlpWeights) -> Result<CircleEvaluation> {
    let data = training_set(cfg)?;
    let mut nus = Vec::with_capacity(data.len());
    let mut nll_sum = 0.0;
    let mut aleatoric_traces = Vec::new();
    let mut epistemic_traces = Vec::new();
    let mut max_exp_entry: f64 = f64::NEG_INFINITY;
    let mut n_uncomputable = 0usize;
    let mut scatter = Vec::with_capacity(data.len());

    for i in 0..data.len() {
        let (out, _) = forward(weights, cfg.model.hidden_activation, &data.inputs[i])?;
        let raw = RawHeadM::new(2, out)?;
        let params = transform_multi(&raw)?;
        nll_sum += mern_nll(&params, &data.targets[i], cfg.loss.r)?;
        nus.push(params.nu);
        scatter.push((data.inputs[i][0], params.nu));
        match predict_multi(&params) {
            Ok(pred) => {
                aleatoric_traces.push(pred.aleatoric[0][0] + pred.aleatoric[1][1]);
                epistemic_traces.push(pred.epistemic[0][0] + pred.epistemic[1][1]);
                let exp = pred
                    .experiment_uncertainty
                    .expect("defined for the 2-D head");
                for row in &exp {
                    for &v in row {
                        max_exp_entry = max_exp_entry.max(v.abs());
                    }
                }
            }
            Err(_) => n_uncomputable += 1,
        }
    }

    let n = data.len() as f64;
    let mean_nu = nus.iter().sum::<f64>() / n;
    let saturated = nus
        .iter()
        .filter(|&&v| v - 3.0 < NU_SATURATION_EPSILON)
        .count();
    let median_aleatoric_trace = if aleatoric_traces.is_empty() {
        None
    } else {
        let mut sorted = aleatoric_traces.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("traces are finite"));
        Some(sorted[(sorted.len() - 1) / 2])
    };

    let metrics = CircleMetrics {
        variant: cfg.loss.variant.as_str().to_string(),
        n_train: data.len(),
        train_mean_nll: nll_sum / n,
        mean_nu,
        mean_nu_minus_3: mean(nus.iter().map(|&v| v - 3.0)),
        min_nu: nus.iter().cloned().fold(f64::INFINITY, f64::min),
        max_nu: nus.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        saturated_fraction: saturated as f64 / n,
        n_uncomputable,
        median_aleatoric_trace,
        mean_epistemic_trace: if epistemic_traces.is_empty() {
            None
        } else {
            Some(mean(epistemic_traces.iter().copied()))
        },
        max_experiment_entry: if max_exp_entry.is_finite() {
            Some(max_exp_entry)
        } else {
            None
        },
    };
    Ok(CircleEvaluation {
        metrics,
        nu_scatter: scatter,
    })
}

/// Evaluates one tabular repeat on its held-out split, de-standardizing
/// back into the target's original units.
pub fn evaluate_tabular_repeat(
    cfg: &RunConfig,
    weights: &MlpWeights,
    repeat: usize,
    train: &Dataset,
    test: &Dataset,
) -> Result<TabularRepeatMetrics> {
    let std = test
        .meta
        .standardization
        .as_ref()
        .ok_or_else(|| {
            EviregError::invalid_input("tabular splits carry standardization metadata".to_string())
        })?;
    let target_std = std.target_std[0];
    let target_mean = std.target_mean[0];

    let mut params = Vec::with_capacity(test.len());
    let mut means_orig = Vec::with_capacity(test.len());
    let mut targets_std = Vec::with_capacity(test.len());
    let mut targets_orig = Vec::with_capacity(test.len());
    let mut epistemic_sum = 0.0;
    for i in 0..test.len() {
        let p = head_params(weights, cfg, &test.inputs[i])?;
        let s = predict(&p)?;
        means_orig.push(s.mean * target_std + target_mean);
        targets_std.push(test.targets[i][0]);
        targets_orig.push(test.targets[i][0] * target_std + target_mean);
        epistemic_sum += s.epistemic * target_std * target_std;
        params.push(p);
    }
    let cal = calibration(&params, &targets_std, &default_calibration_levels())?;
    Ok(TabularRepeatMetrics {
        repeat,
        n_train: train.len(),
        n_test: test.len(),
        rmse_test: rmse(&means_orig, &targets_orig)?,
        predictive_nll_test: predictive_nll_original_units(&params, &targets_std, target_std)?,
        calibration_error: cal.calibration_error,
        mean_epistemic: epistemic_sum / test.len() as f64,
    })
}

pub fn aggregate_tabular(cfg: &RunConfig, repeats: Vec<TabularRepeatMetrics>) -> TabularMetrics {
    let mean_rmse = mean(repeats.iter().map(|r| r.rmse_test));
    let mean_predictive_nll = mean(repeats.iter().map(|r| r.predictive_nll_test));
    TabularMetrics {
        variant: cfg.loss.variant.as_str().to_string(),
        repeats,
        mean_rmse,
        mean_predictive_nll,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::recipe;
    use crate::trainer::train;

    fn small_cubic() -> RunConfig {
        let mut cfg = recipe("cubic").unwrap();
        cfg.model.hidden_widths = vec![16];
        cfg.train.epochs = 20;
        if let DataConfig::Cubic { n_train, .. } = &mut cfg.data {
            *n_train = 96;
        }
        cfg
    }

    #[test]
    fn cubic_evaluation_is_deterministic_and_complete() {
        let cfg = small_cubic();
        let data = training_set(&cfg).unwrap();
        let scale = scalar_scale(&data).unwrap();
        let out = train(&cfg, &standardize_dataset(&data, &scale)).unwrap();
        let a = evaluate_cubic(&cfg, &out.weights).unwrap();
        let b = evaluate_cubic(&cfg, &out.weights).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics.n_id, ID_GRID_POINTS);
        assert_eq!(a.metrics.n_ood, 400);
        assert_eq!(a.band.len(), ID_GRID_POINTS + 400);
        // Band is sorted and spans the full evaluated range.
        assert!(a.band.windows(2).all(|w| w[0].x <= w[1].x));
        assert_eq!(a.band.first().unwrap().x, -6.0);
        assert_eq!(a.band.last().unwrap().x, 6.0);
    }

    #[test]
    fn circle_evaluation_reports_nu_statistics() {
        let mut cfg = recipe("circle-hua").unwrap();
        cfg.train.epochs = 30;
        cfg.train.hua_init = false;
        let data = training_set(&cfg).unwrap();
        let out = train(&cfg, &data).unwrap();
        let eval = evaluate_circle(&cfg, &out.weights).unwrap();
        assert_eq!(eval.nu_scatter.len(), data.len());
        assert!(eval.metrics.mean_nu > 3.0);
        assert!(eval.metrics.max_nu <= 13.0);
        assert!(eval.metrics.min_nu >= 3.0);
    }
}
