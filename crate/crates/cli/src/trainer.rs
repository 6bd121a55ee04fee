//! Seeded mini-batch training loop shared by every experiment.

use evireg_core::data::Dataset;
use evireg_core::net::{
    adam_step, backward, forward, hua_init, init, AdamState, MlpGradients, MlpWeights,
};
use evireg_core::nig::RawHead;
use evireg_core::{
    grad_head, grad_multi, mern_nll, total_loss, transform_multi, unc_reg_multi, EviregError,
    RawHeadM, Result,
};

use crate::config::RunConfig;

/// Mean loss components over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub nll: f64,
    pub evidence: f64,
    pub escape: f64,
}

/// Final parameters, optimizer state, and the per-epoch loss log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: MlpWeights,
    pub adam: AdamState,
    pub log: Vec<EpochStats>,
}

/// Index of the channel that `hua_init` saturates: the evidence channel of
/// the scalar head, or the degrees-of-freedom channel of the bivariate head.
fn saturated_channel(output_dim: usize) -> usize {
    if output_dim == 4 {
        2
    } else {
        output_dim - 1
    }
}

/// Trains the configured network on `data`, dispatching on the head width.
///
/// Batches are drawn from a fresh permutation per epoch using the shuffle
/// seed, gradients are mini-batch means of the exact per-sample gradients,
/// and the whole loop is deterministic for a fixed config.
pub fn train(cfg: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    data.validate()?;
    if data.input_dim() != cfg.model.input_dim {
        return Err(EviregError::shape(format!(
            "dataset has {}-dimensional inputs, model expects {}",
            data.input_dim(),
            cfg.model.input_dim
        )));
    }
    let univariate = cfg.model.output_dim == 4;
    let expected_targets = if univariate { 1 } else { 2 };
    if data.target_dim() != expected_targets {
        return Err(EviregError::shape(format!(
            "dataset has {}-dimensional targets, head expects {expected_targets}",
            data.target_dim()
        )));
    }

    let mut weights = init(&cfg.model)?;
    if cfg.train.hua_init {
        hua_init(
            &mut weights,
            saturated_channel(cfg.model.output_dim),
            cfg.train.hua_bias,
        )?;
    }
    let mut adam = AdamState::new(&weights, cfg.train.lr);
    let mut shuffle = evireg_core::Rng::new(cfg.train.seed);
    let n = data.len();
    let w = cfg.loss.weights();
    let kind = cfg.loss.activation;
    let hidden = cfg.model.hidden_activation;
    let mut log = Vec::with_capacity(cfg.train.epochs);

    for epoch in 0..cfg.train.epochs {
        let order = shuffle.permutation(n);
        let mut sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for batch in order.chunks(cfg.train.batch_size) {
            let mut grads = MlpGradients::zeros_like(&weights);
            for &i in batch {
                let (out, cache) = forward(&weights, hidden, &data.inputs[i])?;
                let d_out: Vec<f64> = if univariate {
                    let raw = RawHead::from_array([out[0], out[1], out[2], out[3]]);
                    let y = data.targets[i][0];
                    let b = total_loss(&raw, y, &w, kind)?;
                    sums.0 += b.total;
                    sums.1 += b.nll;
                    sums.2 += b.evidence_reg;
                    sums.3 += b.unc_reg;
                    grad_head(&raw, y, &w, kind)?.as_array().to_vec()
                } else {
                    let raw = RawHeadM::new(2, out)?;
                    let y = &data.targets[i];
                    let nll = mern_nll(&transform_multi(&raw)?, y, cfg.loss.r)?;
                    let escape = unc_reg_multi(&raw, y)?;
                    let total = nll + w.lambda1 * escape;
                    if !total.is_finite() {
                        return Err(EviregError::numeric(format!(
                            "loss diverged at epoch {epoch}: nll {nll}, escape {escape}"
                        )));
                    }
                    sums.0 += total;
                    sums.1 += nll;
                    sums.3 += escape;
                    grad_multi(&raw, y, w.lambda1, cfg.loss.r, w.detach_error_in_u)?
                };
                grads.add_assign(&backward(&weights, hidden, &cache, &d_out)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut weights, &grads, &mut adam)?;
        }
        let inv = 1.0 / n as f64;
        log.push(EpochStats {
            epoch,
            total: sums.0 * inv,
            nll: sums.1 * inv,
            evidence: sums.2 * inv,
            escape: sums.3 * inv,
        });
    }

    Ok(TrainOutcome {
        weights,
        adam,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::recipe;
    use evireg_core::data::{gen_circle, gen_cubic};

    fn tiny_cubic_config() -> RunConfig {
        let mut cfg = recipe("cubic").unwrap();
        cfg.model.hidden_widths = vec![16];
        cfg.train.epochs = 30;
        cfg.train.batch_size = 32;
        if let crate::config::DataConfig::Cubic { n_train, .. } = &mut cfg.data {
            *n_train = 64;
        }
        cfg
    }

    #[test]
    fn training_reduces_the_loss() {
        let cfg = tiny_cubic_config();
        let (train_set, _) = gen_cubic(64, 9, 3.0).unwrap();
        let out = train(&cfg, &train_set).unwrap();
        assert_eq!(out.log.len(), 30);
        assert!(out.log[29].total < out.log[0].total);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_cubic_config();
        let (train_set, _) = gen_cubic(64, 9, 3.0).unwrap();
        let a = train(&cfg, &train_set).unwrap();
        let b = train(&cfg, &train_set).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.log, b.log);
        assert_eq!(a.adam.t, b.adam.t);
    }

    #[test]
    fn multivariate_path_trains() {
        let mut cfg = recipe("circle-hua").unwrap();
        cfg.train.epochs = 20;
        cfg.train.hua_init = false;
        let data = gen_circle(48, 9, 0.1, false).unwrap();
        let out = train(&cfg, &data).unwrap();
        assert!(out.log[19].total < out.log[0].total);
    }

    #[test]
    fn hua_init_saturates_the_alpha_channel() {
        let mut cfg = tiny_cubic_config();
        cfg.train.hua_init = true;
        cfg.train.epochs = 1;
        let (train_set, _) = gen_cubic(64, 9, 3.0).unwrap();
        let out = train(&cfg, &train_set).unwrap();
        // One epoch of ERN cannot lift a -20 bias; the report must show
        // every input still saturated.
        let report = evireg_core::metrics::hua_escape_report(
            &out.weights,
            cfg.model.hidden_activation,
            cfg.loss.activation,
            &train_set.inputs,
            1e-3,
        )
        .unwrap();
        assert_eq!(report.fraction_in_hua, 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cfg = tiny_cubic_config();
        let data = gen_circle(16, 9, 0.1, false).unwrap();
        assert!(train(&cfg, &data).is_err());
    }
}
