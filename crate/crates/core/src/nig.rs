//! Univariate evidential head: Normal-Inverse-Gamma parameters over a
//! Gaussian observation model.
//!
//! A regression head emits four raw values `(o_gamma, o_v, o_alpha, o_beta)`.
//! [`activate_head`] maps them to valid NIG parameters `(gamma, v, alpha,
//! beta)`; [`predict`] splits the predictive second moment into aleatoric and
//! epistemic parts; [`marginal_params`] gives the closed-form Student-t
//! marginal over observations.

use crate::error::{EviregError, Result};
use crate::rng::Rng;
use crate::special::{lgamma, softplus};

use serde::{Deserialize, Serialize};

/// Default floor applied to `v` and `beta` after activation so later
/// divisions stay finite even when the positivity transform underflows.
pub const DEFAULT_CLAMP_FLOOR: f64 = 1e-12;

/// Default threshold on `alpha - 1` below which a prediction counts as
/// sitting in the high-uncertainty region.
pub const DEFAULT_HUA_EPSILON: f64 = 1e-3;

/// Positivity transform applied to the `v`, `alpha`, and `beta` channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// `softplus(o)`; smooth, saturates exponentially for negative inputs.
    Softplus,
    /// `max(o, 0)`; exactly zero (and exactly flat) for negative inputs.
    Relu,
    /// `exp(o)`; never zero but vanishes exponentially for negative inputs.
    Exp,
}

impl ActivationKind {
    /// Applies the transform.
    pub fn apply(self, o: f64) -> f64 {
        match self {
            ActivationKind::Softplus => softplus(o),
            ActivationKind::Relu => o.max(0.0),
            ActivationKind::Exp => o.exp(),
        }
    }

    /// Derivative of the transform; the ReLU derivative at 0 is taken as 0.
    pub fn derivative(self, o: f64) -> f64 {
        match self {
            ActivationKind::Softplus => crate::special::sigmoid(o),
            ActivationKind::Relu => {
                if o > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Exp => o.exp(),
        }
    }
}

/// Raw head outputs before any positivity transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawHead {
    pub o_gamma: f64,
    pub o_v: f64,
    pub o_alpha: f64,
    pub o_beta: f64,
}

impl RawHead {
    pub fn new(o_gamma: f64, o_v: f64, o_alpha: f64, o_beta: f64) -> Self {
        RawHead {
            o_gamma,
            o_v,
            o_alpha,
            o_beta,
        }
    }

    /// Raw outputs in channel order (gamma, v, alpha, beta).
    pub fn as_array(&self) -> [f64; 4] {
        [self.o_gamma, self.o_v, self.o_alpha, self.o_beta]
    }

    /// Rebuilds from channel order (gamma, v, alpha, beta).
    pub fn from_array(a: [f64; 4]) -> Self {
        RawHead::new(a[0], a[1], a[2], a[3])
    }

    fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("o_gamma", self.o_gamma),
            ("o_v", self.o_v),
            ("o_alpha", self.o_alpha),
            ("o_beta", self.o_beta),
        ] {
            if !value.is_finite() {
                return Err(EviregError::invalid_input(format!(
                    "raw head channel {name} is not finite: {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Normal-Inverse-Gamma parameters: mean `gamma`, virtual evidence `v > 0`,
/// shape `alpha >= 1`, scale `beta > 0`.
///
/// `alpha = 1` can arise from the ReLU transform and is legal for loss
/// evaluation; [`predict`] rejects it because the predictive moments diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub gamma: f64,
    pub v: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    pub fn new(gamma: f64, v: f64, alpha: f64, beta: f64) -> Self {
        NigParams {
            gamma,
            v,
            alpha,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(EviregError::invalid_input(format!(
                "gamma must be finite, got {}",
                self.gamma
            )));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(EviregError::invalid_input(format!(
                "v must be positive and finite, got {}",
                self.v
            )));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(EviregError::invalid_input(format!(
                "alpha must be >= 1 and finite, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(EviregError::invalid_input(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Point prediction with its uncertainty split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    /// Predicted mean, `gamma`.
    pub mean: f64,
    /// Expected observation noise, `beta / (alpha - 1)`.
    pub aleatoric: f64,
    /// Variance of the mean itself, `beta / (v (alpha - 1))`.
    pub epistemic: f64,
}

/// Parameters of a location-scale Student-t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams {
    pub loc: f64,
    pub scale_sq: f64,
    pub dof: f64,
}

impl StudentTParams {
    pub fn validate(&self) -> Result<()> {
        if !self.loc.is_finite()
            || !(self.scale_sq > 0.0 && self.scale_sq.is_finite())
            || !(self.dof > 0.0 && self.dof.is_finite())
        {
            return Err(EviregError::invalid_input(format!(
                "invalid Student-t parameters: loc {}, scale_sq {}, dof {}",
                self.loc, self.scale_sq, self.dof
            )));
        }
        Ok(())
    }
}

/// Maps raw head outputs to NIG parameters with the default clamp floor.
///
/// `gamma` passes through unchanged; `v` and `beta` get the positivity
/// transform and are clamped to at least [`DEFAULT_CLAMP_FLOOR`]; `alpha` is
/// the transform plus one.
pub fn activate_head(raw: &RawHead, kind: ActivationKind) -> Result<NigParams> {
    activate_head_with_floor(raw, kind, DEFAULT_CLAMP_FLOOR)
}

/// [`activate_head`] with an explicit clamp floor for `v` and `beta`.
pub fn activate_head_with_floor(
    raw: &RawHead,
    kind: ActivationKind,
    floor: f64,
) -> Result<NigParams> {
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "clamp floor must be non-negative and finite, got {floor}"
        )));
    }
    raw.validate()?;
    Ok(NigParams {
        gamma: raw.o_gamma,
        v: kind.apply(raw.o_v).max(floor),
        alpha: kind.apply(raw.o_alpha) + 1.0,
        beta: kind.apply(raw.o_beta).max(floor),
    })
}

/// Splits the predictive uncertainty of valid NIG parameters.
///
/// Requires `alpha > 1`; at `alpha = 1` both uncertainty terms diverge.
pub fn predict(params: &NigParams) -> Result<PredictionSummary> {
    params.validate()?;
    if params.alpha <= 1.0 {
        return Err(EviregError::invalid_input(format!(
            "predict requires alpha > 1, got {}",
            params.alpha
        )));
    }
    let aleatoric = params.beta / (params.alpha - 1.0);
    Ok(PredictionSummary {
        mean: params.gamma,
        aleatoric,
        epistemic: aleatoric / params.v,
    })
}

/// Closed-form marginal over observations: a Student-t with location `gamma`,
/// squared scale `beta (1 + v) / (v alpha)`, and `2 alpha` degrees of
/// freedom.
pub fn marginal_params(params: &NigParams) -> Result<StudentTParams> {
    params.validate()?;
    Ok(StudentTParams {
        loc: params.gamma,
        scale_sq: params.beta * (1.0 + params.v) / (params.v * params.alpha),
        dof: 2.0 * params.alpha,
    })
}

/// Log-density of the location-scale Student-t distribution.
pub fn student_t_logpdf(y: f64, st: &StudentTParams) -> Result<f64> {
    st.validate()?;
    if !y.is_finite() {
        return Err(EviregError::invalid_input(format!(
            "student_t_logpdf requires finite y, got {y}"
        )));
    }
    let d = st.dof;
    let z_sq = (y - st.loc) * (y - st.loc) / st.scale_sq;
    Ok(lgamma((d + 1.0) / 2.0)? - lgamma(d / 2.0)?
        - 0.5 * (d * std::f64::consts::PI * st.scale_sq).ln()
        - (d + 1.0) / 2.0 * (z_sq / d).ln_1p())
}

/// Joint log-density of `(mu, sigma_sq)` under the NIG distribution:
/// Gaussian over `mu` with variance `sigma_sq / v`, Inverse-Gamma over
/// `sigma_sq` with shape `alpha` and scale `beta`.
pub fn nig_logpdf(mu: f64, sigma_sq: f64, params: &NigParams) -> Result<f64> {
    params.validate()?;
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "nig_logpdf requires sigma_sq > 0, got {sigma_sq}"
        )));
    }
    if !mu.is_finite() {
        return Err(EviregError::invalid_input(format!(
            "nig_logpdf requires finite mu, got {mu}"
        )));
    }
    let gauss = -0.5 * (2.0 * std::f64::consts::PI * sigma_sq / params.v).ln()
        - params.v * (mu - params.gamma) * (mu - params.gamma) / (2.0 * sigma_sq);
    let inv_gamma = params.alpha * params.beta.ln()
        - lgamma(params.alpha)?
        - (params.alpha + 1.0) * sigma_sq.ln()
        - params.beta / sigma_sq;
    Ok(gauss + inv_gamma)
}

/// Draws `(mu, sigma_sq)` from the NIG distribution.
pub fn sample_nig(params: &NigParams, rng: &mut Rng) -> Result<(f64, f64)> {
    params.validate()?;
    let sigma_sq = rng.inverse_gamma(params.alpha, params.beta);
    let mu = rng.gaussian_with(params.gamma, (sigma_sq / params.v).sqrt());
    Ok((mu, sigma_sq))
}

/// Draws an observation through the full chain `sigma_sq -> mu -> y`; the
/// marginal law of `y` is exactly [`marginal_params`].
pub fn sample_observation(params: &NigParams, rng: &mut Rng) -> Result<f64> {
    let (mu, sigma_sq) = sample_nig(params, rng)?;
    Ok(rng.gaussian_with(mu, sigma_sq.sqrt()))
}

/// True when the head sits in the high-uncertainty region, `alpha - 1 <
/// epsilon`: virtual evidence so low that the uncertainty terms are near
/// their pole.
pub fn hua_membership(params: &NigParams, epsilon: f64) -> Result<bool> {
    params.validate()?;
    if !(epsilon > 0.0) {
        return Err(EviregError::invalid_input(format!(
            "hua_membership requires epsilon > 0, got {epsilon}"
        )));
    }
    Ok(params.alpha - 1.0 < epsilon)
}
