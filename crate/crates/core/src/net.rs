//! Minimal fully-connected network with manual backpropagation and Adam.
//!
//! The network body is deliberately small and explicit: dense layers with a
//! hidden nonlinearity (ReLU or Tanh) and a linear output layer that emits
//! raw head values. Loss modules supply the gradient with respect to those
//! raw outputs; [`backward`] propagates it to every weight and bias.
//!
//! Checkpoints are JSON with round-trip-safe floats, so saving and reloading
//! reproduces weights, optimizer state, and subsequent training bit for bit.

use crate::error::{EviregError, Result};
use crate::rng::Rng;

use serde::{Deserialize, Serialize};
use std::path::Path;

/// Supported checkpoint schema version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

impl HiddenActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => z.max(0.0),
            HiddenActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation; ReLU at 0 is taken as 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture and initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Must be a valid head width: 4 for the univariate head or
    /// `n(n+3)/2 + 1` for an n-dimensional multivariate head.
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(EviregError::invalid_input(
                "input_dim must be at least 1".to_string(),
            ));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(EviregError::invalid_input(
                "hidden layer widths must be positive".to_string(),
            ));
        }
        if !valid_head_width(self.output_dim) {
            return Err(EviregError::invalid_input(format!(
                "output_dim {} is not a head width (4, or n(n+3)/2 + 1 for n >= 2: 6, 10, 15, ...)",
                self.output_dim
            )));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut fan_in = self.input_dim;
        for &width in &self.hidden_widths {
            dims.push((fan_in, width));
            fan_in = width;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }
}

/// True when `width` is 4 or `n(n+3)/2 + 1` for some `n >= 2`.
fn valid_head_width(width: usize) -> bool {
    if width == 4 {
        return true;
    }
    let mut n = 2usize;
    loop {
        let m = n * (n + 3) / 2 + 1;
        if m == width {
            return true;
        }
        if m > width {
            return false;
        }
        n += 1;
    }
}

/// One dense layer's parameters (or a gradient of the same shape):
/// `w[out][in]` and `b[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LayerParams {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        LayerParams {
            w: vec![vec![0.0; fan_in]; fan_out],
            b: vec![0.0; fan_out],
        }
    }
}

/// All layer parameters of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub layers: Vec<LayerParams>,
}

/// Gradient with the same shape as [`MlpWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<LayerParams>,
}

impl MlpGradients {
    /// Zero gradient shaped like the given weights.
    pub fn zeros_like(weights: &MlpWeights) -> Self {
        MlpGradients {
            layers: weights
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.w.first().map_or(0, Vec::len), l.b.len()))
                .collect(),
        }
    }

    /// Accumulates another gradient of the same shape.
    pub fn add_assign(&mut self, other: &MlpGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ra, rb) in a.w.iter_mut().zip(&b.w) {
                for (va, vb) in ra.iter_mut().zip(rb) {
                    *va += vb;
                }
            }
            for (va, vb) in a.b.iter_mut().zip(&b.b) {
                *va += vb;
            }
        }
    }

    /// Scales every component, e.g. by `1 / batch_size`.
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for row in &mut layer.w {
                for v in row.iter_mut() {
                    *v *= factor;
                }
            }
            for v in layer.b.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Intermediate values captured by [`forward`] for use in [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer: `layer_inputs[i]` feeds layer `i`.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Vec<f64>>,
}

/// He-style initialization: Gaussian weights with standard deviation
/// `sqrt(2 / fan_in)` drawn from the seeded generator, zero biases.
pub fn init(config: &MlpConfig) -> Result<MlpWeights> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let layers = config
        .layer_dims()
        .iter()
        .map(|&(fan_in, fan_out)| {
            let std_dev = (2.0 / fan_in as f64).sqrt();
            LayerParams {
                w: (0..fan_out)
                    .map(|_| (0..fan_in).map(|_| rng.gaussian_with(0.0, std_dev)).collect())
                    .collect(),
                b: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpWeights { layers })
}

/// Sets the output-layer bias of one channel, typically to a large negative
/// offset so the corresponding positivity transform starts saturated.
///
/// Idempotent: repeated calls with the same offset leave weights unchanged.
pub fn hua_init(weights: &mut MlpWeights, channel: usize, bias_offset: f64) -> Result<()> {
    let last = weights
        .layers
        .last_mut()
        .ok_or_else(|| EviregError::invalid_input("network has no layers".to_string()))?;
    if channel >= last.b.len() {
        return Err(EviregError::invalid_input(format!(
            "channel {channel} out of range for output width {}",
            last.b.len()
        )));
    }
    if !bias_offset.is_finite() {
        return Err(EviregError::invalid_input(format!(
            "bias offset must be finite, got {bias_offset}"
        )));
    }
    last.b[channel] = bias_offset;
    Ok(())
}

/// Forward pass; hidden layers use `hidden`, the output layer is linear.
pub fn forward(
    weights: &MlpWeights,
    hidden: HiddenActivation,
    x: &[f64],
) -> Result<(Vec<f64>, ForwardCache)> {
    let n_layers = weights.layers.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut a = x.to_vec();
    for (i, layer) in weights.layers.iter().enumerate() {
        let fan_in = layer.w.first().map_or(0, Vec::len);
        if a.len() != fan_in {
            return Err(EviregError::shape(format!(
                "layer {i} expects {fan_in} inputs, got {}",
                a.len()
            )));
        }
        let z: Vec<f64> = layer
            .w
            .iter()
            .zip(&layer.b)
            .map(|(row, b)| row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        layer_inputs.push(std::mem::take(&mut a));
        a = if i + 1 < n_layers {
            z.iter().map(|&v| hidden.apply(v)).collect()
        } else {
            z.clone()
        };
        pre_activations.push(z);
    }
    Ok((
        a,
        ForwardCache {
            layer_inputs,
            pre_activations,
        },
    ))
}

/// Backpropagates a gradient with respect to the raw outputs down to every
/// weight and bias.
pub fn backward(
    weights: &MlpWeights,
    hidden: HiddenActivation,
    cache: &ForwardCache,
    d_output: &[f64],
) -> Result<MlpGradients> {
    let n_layers = weights.layers.len();
    if cache.layer_inputs.len() != n_layers {
        return Err(EviregError::shape(
            "forward cache does not match network depth".to_string(),
        ));
    }
    let out_dim = weights.layers[n_layers - 1].b.len();
    if d_output.len() != out_dim {
        return Err(EviregError::shape(format!(
            "output gradient has {} entries, network emits {out_dim}",
            d_output.len()
        )));
    }
    let mut grads = MlpGradients::zeros_like(weights);
    // The output layer is linear, so its delta is the incoming gradient.
    let mut delta = d_output.to_vec();
    for i in (0..n_layers).rev() {
        let layer = &weights.layers[i];
        let input = &cache.layer_inputs[i];
        let g = &mut grads.layers[i];
        for (row, (&d, g_row)) in delta.iter().zip(&mut g.w).enumerate() {
            for (g_w, &a) in g_row.iter_mut().zip(input) {
                *g_w = d * a;
            }
            g.b[row] = d;
        }
        if i > 0 {
            // d input = W^T delta, then through the previous activation.
            let fan_in = input.len();
            let mut d_input = vec![0.0; fan_in];
            for (row, &d) in delta.iter().enumerate() {
                for (di, &w) in d_input.iter_mut().zip(&layer.w[row]) {
                    *di += d * w;
                }
            }
            let prev_pre = &cache.pre_activations[i - 1];
            delta = d_input
                .iter()
                .zip(prev_pre)
                .map(|(&d, &z)| d * hidden.derivative(z))
                .collect();
        }
    }
    Ok(grads)
}

/// Adam optimizer state: moment accumulators shaped like the weights, a step
/// counter, and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<LayerParams>,
    pub v: Vec<LayerParams>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with the conventional decay rates (0.9, 0.999) and
    /// epsilon 1e-8.
    pub fn new(weights: &MlpWeights, lr: f64) -> Self {
        let zeros = || {
            weights
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.w.first().map_or(0, Vec::len), l.b.len()))
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    weights: &mut MlpWeights,
    grads: &MlpGradients,
    state: &mut AdamState,
) -> Result<()> {
    if weights.layers.len() != grads.layers.len() || weights.layers.len() != state.m.len() {
        return Err(EviregError::shape(
            "weights, gradients, and optimizer state disagree on depth".to_string(),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for l in 0..weights.layers.len() {
        let (wl, gl) = (&mut weights.layers[l], &grads.layers[l]);
        let (ml, vl) = (&mut state.m[l], &mut state.v[l]);
        for r in 0..wl.b.len() {
            for c in 0..wl.w[r].len() {
                let g = gl.w[r][c];
                ml.w[r][c] = state.beta1 * ml.w[r][c] + (1.0 - state.beta1) * g;
                vl.w[r][c] = state.beta2 * vl.w[r][c] + (1.0 - state.beta2) * g * g;
                let m_hat = ml.w[r][c] / bias1;
                let v_hat = vl.w[r][c] / bias2;
                wl.w[r][c] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
            }
            let g = gl.b[r];
            ml.b[r] = state.beta1 * ml.b[r] + (1.0 - state.beta1) * g;
            vl.b[r] = state.beta2 * vl.b[r] + (1.0 - state.beta2) * g * g;
            let m_hat = ml.b[r] / bias1;
            let v_hat = vl.b[r] / bias2;
            wl.b[r] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: MlpConfig,
    pub layers: Vec<LayerParams>,
    pub adam: AdamState,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(config: &MlpConfig, weights: &MlpWeights, adam: &AdamState) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            layers: weights.layers.clone(),
            adam: adam.clone(),
            seed: config.seed,
        }
    }

    pub fn weights(&self) -> MlpWeights {
        MlpWeights {
            layers: self.layers.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(EviregError::UnsupportedVersion {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        self.config.validate()?;
        let dims = self.config.layer_dims();
        if self.layers.len() != dims.len() {
            return Err(EviregError::shape(format!(
                "checkpoint has {} layers, config describes {}",
                self.layers.len(),
                dims.len()
            )));
        }
        for (i, (layer, &(fan_in, fan_out))) in self.layers.iter().zip(&dims).enumerate() {
            if layer.b.len() != fan_out
                || layer.w.len() != fan_out
                || layer.w.iter().any(|row| row.len() != fan_in)
            {
                return Err(EviregError::shape(format!(
                    "layer {i} does not match config shape {fan_in} -> {fan_out}"
                )));
            }
            for row in &layer.w {
                for &v in row {
                    if !v.is_finite() {
                        return Err(EviregError::numeric(format!(
                            "layer {i} contains a non-finite weight: {v}"
                        )));
                    }
                }
            }
            for &v in &layer.b {
                if !v.is_finite() {
                    return Err(EviregError::numeric(format!(
                        "layer {i} contains a non-finite bias: {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Serializes a checkpoint to pretty JSON with round-trip-safe floats.
pub fn checkpoint_to_json(checkpoint: &Checkpoint) -> Result<String> {
    checkpoint.validate()?;
    serde_json::to_string_pretty(checkpoint).map_err(|e| EviregError::MalformedJson {
        field: "<root>".to_string(),
        detail: e.to_string(),
    })
}

/// Parses and validates a checkpoint, naming the offending field on a
/// malformed document.
pub fn checkpoint_from_json(json: &str) -> Result<Checkpoint> {
    let deserializer = &mut serde_json::Deserializer::from_str(json);
    let checkpoint: Checkpoint =
        serde_path_to_error::deserialize(deserializer).map_err(|e| EviregError::MalformedJson {
            field: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
    checkpoint.validate()?;
    Ok(checkpoint)
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let json = checkpoint_to_json(checkpoint)?;
    std::fs::write(path, json).map_err(|e| EviregError::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| EviregError::io(path.display().to_string(), e))?;
    checkpoint_from_json(&json)
}
