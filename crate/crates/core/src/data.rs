//! Dataset generators and a CSV tabular loader.
//!
//! Everything here is a pure function of its parameters and seed: the cubic
//! curve with out-of-range test grids, the noisy circle with its asymmetric
//! angle density, and a standardize-and-split loader for numeric CSV tables.
//! Standardization statistics always come from training rows only.

use crate::error::{EviregError, Result};
use crate::rng::Rng;

use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_CUBIC_NOISE_STD: f64 = 3.0;
pub const DEFAULT_CIRCLE_NOISE_STD: f64 = 0.1;
/// Grid points per side of the cubic out-of-range test set.
pub const CUBIC_TEST_POINTS_PER_SIDE: usize = 200;

/// Per-column z-score statistics from the training split, plus the indices of
/// any constant feature columns that were dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    /// Original column indices of dropped (zero-variance) features.
    pub dropped_features: Vec<usize>,
}

/// Provenance carried with every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    pub standardization: Option<Standardization>,
}

/// A regression dataset: N rows of d-dimensional inputs and k-dimensional
/// targets, optionally with noise-free targets alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// Noise-free targets, when the generator knows them.
    pub noiseless: Option<Vec<Vec<f64>>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(EviregError::shape(format!(
                "{} input rows vs {} target rows",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        let d = self.input_dim();
        let k = self.target_dim();
        if self.inputs.iter().any(|r| r.len() != d) {
            return Err(EviregError::shape("ragged input rows".to_string()));
        }
        if self.targets.iter().any(|r| r.len() != k) {
            return Err(EviregError::shape("ragged target rows".to_string()));
        }
        if let Some(noiseless) = &self.noiseless {
            if noiseless.len() != self.targets.len()
                || noiseless.iter().any(|r| r.len() != k)
            {
                return Err(EviregError::shape(
                    "noiseless targets do not match targets shape".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Cubic curve y = x^3 + noise. Training inputs are uniform on [-4, 4];
/// the returned test set is an even grid over [-6, -4) and (4, 6] with
/// `CUBIC_TEST_POINTS_PER_SIDE` points per side, carrying both noisy targets
/// and the noise-free cubes.
pub fn gen_cubic(n_train: usize, seed: u64, noise_std: f64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 {
        return Err(EviregError::invalid_input(
            "n_train must be at least 1".to_string(),
        ));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "noise_std must be finite and nonnegative, got {noise_std}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut inputs = Vec::with_capacity(n_train);
    let mut targets = Vec::with_capacity(n_train);
    let mut truth = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let x = rng.uniform(-4.0, 4.0);
        let clean = x * x * x;
        inputs.push(vec![x]);
        targets.push(vec![clean + noise_std * rng.gaussian()]);
        truth.push(vec![clean]);
    }
    let train = Dataset {
        inputs,
        targets,
        noiseless: Some(truth),
        meta: DatasetMeta {
            name: "cubic-train".to_string(),
            seed,
            standardization: None,
        },
    };

    let m = CUBIC_TEST_POINTS_PER_SIDE;
    let step = 2.0 / m as f64;
    let mut xs = Vec::with_capacity(2 * m);
    // Left side covers [-6, -4): includes -6, stops one step short of -4.
    for i in 0..m {
        xs.push(-6.0 + step * i as f64);
    }
    // Right side covers (4, 6]: starts one step past 4, includes 6.
    for i in 0..m {
        xs.push(4.0 + step * (i + 1) as f64);
    }
    let mut inputs = Vec::with_capacity(xs.len());
    let mut targets = Vec::with_capacity(xs.len());
    let mut truth = Vec::with_capacity(xs.len());
    for x in xs {
        let clean = x * x * x;
        inputs.push(vec![x]);
        targets.push(vec![clean + noise_std * rng.gaussian()]);
        truth.push(vec![clean]);
    }
    let test = Dataset {
        inputs,
        targets,
        noiseless: Some(truth),
        meta: DatasetMeta {
            name: "cubic-test-ood".to_string(),
            seed,
            standardization: None,
        },
    };
    Ok((train, test))
}

/// Even grid of `n_points` over the in-range interval [-4, 4] with noisy and
/// noise-free cubic targets; used for truth-referenced evaluation and plots.
pub fn gen_cubic_id_grid(n_points: usize, seed: u64, noise_std: f64) -> Result<Dataset> {
    if n_points < 2 {
        return Err(EviregError::invalid_input(
            "grid needs at least 2 points".to_string(),
        ));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "noise_std must be finite and nonnegative, got {noise_std}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut inputs = Vec::with_capacity(n_points);
    let mut targets = Vec::with_capacity(n_points);
    let mut truth = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let x = -4.0 + 8.0 * i as f64 / (n_points - 1) as f64;
        let clean = x * x * x;
        inputs.push(vec![x]);
        targets.push(vec![clean + noise_std * rng.gaussian()]);
        truth.push(vec![clean]);
    }
    Ok(Dataset {
        inputs,
        targets,
        noiseless: Some(truth),
        meta: DatasetMeta {
            name: "cubic-grid-id".to_string(),
            seed,
            standardization: None,
        },
    })
}

/// Noisy unit circle: input is an angle t in [0, 2*pi], target is
/// `(1 + eps) * (cos t, sin t)` with a single radial noise draw per sample.
///
/// By default t follows the normalized triangular density proportional to
/// `1 - t/pi` on [0, pi] and `t/pi - 1` on (pi, 2*pi] — dense near 0 and
/// 2*pi, sparse near pi — sampled by inverse CDF. With `literal_transform`
/// set, t is instead the direct map `|1 - zeta/pi|` of a uniform
/// zeta in [0, 2*pi], which lands in [0, 1].
pub fn gen_circle(
    n: usize,
    seed: u64,
    noise_std: f64,
    literal_transform: bool,
) -> Result<Dataset> {
    if n == 0 {
        return Err(EviregError::invalid_input(
            "n must be at least 1".to_string(),
        ));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "noise_std must be finite and nonnegative, got {noise_std}"
        )));
    }
    let mut rng = Rng::new(seed);
    let pi = std::f64::consts::PI;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.next_f64();
        let t = if literal_transform {
            (1.0 - (u * 2.0 * pi) / pi).abs()
        } else if u <= 0.5 {
            // CDF on [0, pi] is t/pi - t^2/(2 pi^2); invert for the lower half.
            pi * (1.0 - (1.0 - 2.0 * u).sqrt())
        } else {
            // Mirror image for the upper half.
            2.0 * pi - pi * (1.0 - (2.0 * u - 1.0).sqrt())
        };
        let eps = noise_std * rng.gaussian();
        let (sin_t, cos_t) = t.sin_cos();
        inputs.push(vec![t]);
        targets.push(vec![(1.0 + eps) * cos_t, (1.0 + eps) * sin_t]);
        truth.push(vec![cos_t, sin_t]);
    }
    Ok(Dataset {
        inputs,
        targets,
        noiseless: Some(truth),
        meta: DatasetMeta {
            name: "circle".to_string(),
            seed,
            standardization: None,
        },
    })
}

/// Random-split configuration for the tabular loader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of rows assigned to training (default 0.9).
    pub train_frac: f64,
    /// Number of independent random splits.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: 0.9,
            repeats: 1,
            seed: 0,
        }
    }
}

/// Output of [`load_csv`]: one (train, test) pair per repeat, plus any
/// warnings about dropped feature columns.
#[derive(Debug, Clone)]
pub struct CsvSplits {
    pub splits: Vec<(Dataset, Dataset)>,
    pub warnings: Vec<String>,
}

/// Parses a numeric CSV with a header row, then for each repeat draws a
/// seeded random split and z-scores features and targets using statistics
/// from the training rows only. Constant feature columns are dropped with a
/// warning; a constant target column is an error.
pub fn load_csv(path: &Path, target_cols: &[usize], split: &SplitConfig) -> Result<CsvSplits> {
    if target_cols.is_empty() {
        return Err(EviregError::invalid_input(
            "at least one target column is required".to_string(),
        ));
    }
    if !(split.train_frac > 0.0 && split.train_frac < 1.0) {
        return Err(EviregError::invalid_input(format!(
            "train_frac must lie strictly between 0 and 1, got {}",
            split.train_frac
        )));
    }
    if split.repeats == 0 {
        return Err(EviregError::invalid_input(
            "repeats must be at least 1".to_string(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    EviregError::io(path.display().to_string(), io)
                } else {
                    unreachable!()
                }
            }
            _ => EviregError::invalid_input(format!("cannot read csv: {e}")),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| EviregError::invalid_input(format!("cannot read csv header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let n_cols = headers.len();
    for &c in target_cols {
        if c >= n_cols {
            return Err(EviregError::invalid_input(format!(
                "target column {c} out of range for {n_cols} columns"
            )));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| EviregError::invalid_input(format!("csv read failure: {e}")))?;
        if record.len() != n_cols {
            return Err(EviregError::shape(format!(
                "row {} has {} cells, header has {n_cols}",
                row_idx + 2,
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(n_cols);
        for (col_idx, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| EviregError::CsvCell {
                // +2: 1-based and the header occupies the first line.
                row: row_idx + 2,
                column: headers[col_idx].clone(),
                detail: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(EviregError::CsvCell {
                    row: row_idx + 2,
                    column: headers[col_idx].clone(),
                    detail: format!("non-finite value {v}"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n < 2 {
        return Err(EviregError::invalid_input(format!(
            "need at least 2 data rows to split, found {n}"
        )));
    }
    let feature_cols: Vec<usize> = (0..n_cols).filter(|c| !target_cols.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(EviregError::invalid_input(
            "every column is a target; no features remain".to_string(),
        ));
    }

    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    let mut splits = Vec::with_capacity(split.repeats);
    let mut warnings = Vec::new();
    for repeat in 0..split.repeats {
        let repeat_seed = split.seed.wrapping_add(repeat as u64);
        let mut rng = Rng::new(repeat_seed);
        let order = rng.permutation(n);
        let n_train = ((n as f64 * split.train_frac).floor() as usize).clamp(1, n - 1);
        let train_rows: Vec<&Vec<f64>> = order[..n_train].iter().map(|&i| &rows[i]).collect();
        let test_rows: Vec<&Vec<f64>> = order[n_train..].iter().map(|&i| &rows[i]).collect();

        // Train-only statistics; test rows never touch them.
        let stats_for = |cols: &[usize]| -> (Vec<f64>, Vec<f64>) {
            let mut means = Vec::with_capacity(cols.len());
            let mut stds = Vec::with_capacity(cols.len());
            for &c in cols {
                let mean =
                    train_rows.iter().map(|r| r[c]).sum::<f64>() / train_rows.len() as f64;
                let var = train_rows
                    .iter()
                    .map(|r| (r[c] - mean) * (r[c] - mean))
                    .sum::<f64>()
                    / train_rows.len() as f64;
                means.push(mean);
                stds.push(var.sqrt());
            }
            (means, stds)
        };
        let (f_mean_all, f_std_all) = stats_for(&feature_cols);
        let (t_mean, t_std) = stats_for(target_cols);
        for (k, &c) in target_cols.iter().enumerate() {
            if t_std[k] == 0.0 {
                return Err(EviregError::invalid_input(format!(
                    "target column {:?} is constant on the repeat-{repeat} training split",
                    headers[c]
                )));
            }
        }
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (k, &c) in feature_cols.iter().enumerate() {
            if f_std_all[k] == 0.0 {
                dropped.push(c);
                warnings.push(format!(
                    "repeat {repeat}: dropping constant feature column {:?} (index {c})",
                    headers[c]
                ));
            } else {
                kept.push(k);
            }
        }
        if kept.is_empty() {
            return Err(EviregError::invalid_input(format!(
                "all feature columns are constant on the repeat-{repeat} training split"
            )));
        }
        let feature_mean: Vec<f64> = kept.iter().map(|&k| f_mean_all[k]).collect();
        let feature_std: Vec<f64> = kept.iter().map(|&k| f_std_all[k]).collect();
        let standardization = Standardization {
            feature_mean: feature_mean.clone(),
            feature_std: feature_std.clone(),
            target_mean: t_mean.clone(),
            target_std: t_std.clone(),
            dropped_features: dropped,
        };

        let project = |rows_ref: &[&Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let inputs = rows_ref
                .iter()
                .map(|r| {
                    kept.iter()
                        .enumerate()
                        .map(|(j, &k)| (r[feature_cols[k]] - feature_mean[j]) / feature_std[j])
                        .collect()
                })
                .collect();
            let targets = rows_ref
                .iter()
                .map(|r| {
                    target_cols
                        .iter()
                        .enumerate()
                        .map(|(j, &c)| (r[c] - t_mean[j]) / t_std[j])
                        .collect()
                })
                .collect();
            (inputs, targets)
        };
        let (train_inputs, train_targets) = project(&train_rows);
        let (test_inputs, test_targets) = project(&test_rows);
        let make = |suffix: &str, inputs, targets| Dataset {
            inputs,
            targets,
            noiseless: None,
            meta: DatasetMeta {
                name: format!("{stem}-r{repeat}-{suffix}"),
                seed: repeat_seed,
                standardization: Some(standardization.clone()),
            },
        };
        splits.push((
            make("train", train_inputs, train_targets),
            make("test", test_inputs, test_targets),
        ));
    }
    Ok(CsvSplits { splits, warnings })
}

/// Writes a dataset as CSV (`x0..`, `y0..`, and `truth0..` when noise-free
/// targets are present) plus a `<path>.meta.json` sidecar with the metadata.
pub fn export_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| EviregError::invalid_input(format!("cannot write csv: {e}")))?;
    let d = dataset.input_dim();
    let k = dataset.target_dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend((0..k).map(|i| format!("y{i}")));
    if dataset.noiseless.is_some() {
        header.extend((0..k).map(|i| format!("truth{i}")));
    }
    writer
        .write_record(&header)
        .map_err(|e| EviregError::invalid_input(format!("csv write failure: {e}")))?;
    for (i, (x, y)) in dataset.inputs.iter().zip(&dataset.targets).enumerate() {
        let mut record: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        record.extend(y.iter().map(|v| format!("{v}")));
        if let Some(truth) = &dataset.noiseless {
            record.extend(truth[i].iter().map(|v| format!("{v}")));
        }
        writer
            .write_record(&record)
            .map_err(|e| EviregError::invalid_input(format!("csv write failure: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| EviregError::io(path.display().to_string(), e))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&dataset.meta).map_err(|e| {
        EviregError::MalformedJson {
            field: "<root>".to_string(),
            detail: e.to_string(),
        }
    })?;
    std::fs::write(&sidecar, json)
        .map_err(|e| EviregError::io(sidecar.display().to_string(), e))
}

/// Reads a dataset written by [`export_csv`]; the sidecar is required.
pub fn import_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| EviregError::invalid_input(format!("cannot read csv: {e}")))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| EviregError::invalid_input(format!("cannot read csv header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let d = headers.iter().filter(|h| h.starts_with('x')).count();
    let k = headers.iter().filter(|h| h.starts_with('y')).count();
    let has_truth = headers.iter().any(|h| h.starts_with("truth"));
    if d == 0 || k == 0 {
        return Err(EviregError::invalid_input(
            "csv header must contain x.. and y.. columns".to_string(),
        ));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut truth = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| EviregError::invalid_input(format!("csv read failure: {e}")))?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| EviregError::shape(format!("row {} too short", row_idx + 2)))?
                .trim()
                .parse()
                .map_err(|_| EviregError::CsvCell {
                    row: row_idx + 2,
                    column: headers[i].clone(),
                    detail: "cannot parse as a number".to_string(),
                })
        };
        inputs.push((0..d).map(parse).collect::<Result<Vec<f64>>>()?);
        targets.push((d..d + k).map(parse).collect::<Result<Vec<f64>>>()?);
        if has_truth {
            truth.push((d + k..d + 2 * k).map(parse).collect::<Result<Vec<f64>>>()?);
        }
    }
    let sidecar = sidecar_path(path);
    let json = std::fs::read_to_string(&sidecar)
        .map_err(|e| EviregError::io(sidecar.display().to_string(), e))?;
    let deserializer = &mut serde_json::Deserializer::from_str(&json);
    let meta: DatasetMeta =
        serde_path_to_error::deserialize(deserializer).map_err(|e| EviregError::MalformedJson {
            field: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
    let dataset = Dataset {
        inputs,
        targets,
        noiseless: if has_truth { Some(truth) } else { None },
        meta,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    path.with_file_name(name)
}
