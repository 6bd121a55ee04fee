//! Gradient verification suites: finite-difference agreement, saturation
//! damping, and exactness of the escape-term gradient, for both heads.
//!
//! The closed-form gradient under test is passed in as a function pointer so
//! the test suite can substitute a deliberately corrupted formula and check
//! that the report localizes the failure to the right channel.

use evireg_core::nig::{ActivationKind, RawHead};
use evireg_core::{
    grad_multi, mern_nll, total_loss, unc_grad_alpha, unc_grad_p_nu, unc_reg_multi, HeadGradient,
    LossWeights, RawHeadM, Result, Rng,
};
use serde::{Deserialize, Serialize};

/// Closed-form scalar-head gradient under test.
pub type GradProvider = fn(&RawHead, f64, &LossWeights, ActivationKind) -> Result<HeadGradient>;

pub const CHANNEL_NAMES: [&str; 4] = ["gamma", "v", "alpha", "beta"];
const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-6;
const SATURATION_BOUND: f64 = 1e-10;
const MULTI_SATURATION_BOUND: f64 = 1e-8;
const ESCAPE_ULP_BOUND: u64 = 4;

/// Scale-aware relative error with a floor that absorbs finite-difference
/// noise near zero.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Order-preserving integer key for ulp distances: negative floats are
/// complemented so the key increases monotonically with the value.
fn ulp_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_nan() || b.is_nan() {
        return u64::MAX;
    }
    ulp_key(a).abs_diff(ulp_key(b))
}

/// Finite-difference agreement for one positivity transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSuite {
    pub activation: String,
    pub probes: usize,
    /// Worst relative error per channel, ordered gamma, v, alpha, beta.
    pub max_rel_err: [f64; 4],
    pub tolerance: f64,
    pub failing_channels: Vec<String>,
}

/// Saturation damping: the alpha-channel gradient of the evidence-regularized
/// objective must vanish deep in the low-evidence region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub activation: String,
    pub probes: usize,
    pub max_abs_grad_alpha: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Exactness of the escape gradient against `-|y - gamma|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeSuite {
    pub probes: usize,
    pub max_ulp: u64,
    pub ulp_bound: u64,
    /// Worst relative error of a finite difference of the escape loss
    /// itself; the independent route to the same identity.
    pub max_fd_rel_err: f64,
    pub pass: bool,
}

/// All checks for the bivariate head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSuite {
    pub fd_probes: usize,
    pub max_rel_err_mu: f64,
    pub max_rel_err_diag: f64,
    pub max_rel_err_lower: f64,
    pub max_rel_err_p_nu: f64,
    pub fd_tolerance: f64,
    pub saturation_probes: usize,
    pub max_abs_grad_p_nu_saturated: f64,
    pub saturation_bound: f64,
    pub escape_max_ulp: u64,
    pub failing: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub fd: Vec<FdSuite>,
    pub saturation: Vec<SaturationRow>,
    pub escape: EscapeSuite,
    pub multi: MultiSuite,
    pub pass: bool,
}

impl GradcheckReport {
    /// Channels whose finite-difference check failed, qualified by
    /// activation, e.g. `softplus/v`.
    pub fn failing_channels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for suite in &self.fd {
            for ch in &suite.failing_channels {
                out.push(format!("{}/{}", suite.activation, ch));
            }
        }
        for ch in &self.multi.failing {
            out.push(format!("multi/{ch}"));
        }
        out
    }
}

fn activation_name(kind: ActivationKind) -> &'static str {
    match kind {
        ActivationKind::Softplus => "softplus",
        ActivationKind::Relu => "relu",
        ActivationKind::Exp => "exp",
    }
}

/// Draws a raw channel value, keeping ReLU probes away from the kink at 0.
fn draw_channel(rng: &mut Rng, kind: ActivationKind) -> f64 {
    loop {
        let v = rng.uniform(-3.0, 3.0);
        if kind != ActivationKind::Relu || v.abs() > 0.01 {
            return v;
        }
    }
}

/// Draws a target with the error magnitude bounded away from the absolute
/// value's kink.
fn draw_target(rng: &mut Rng, gamma: f64) -> f64 {
    let magnitude = 0.05 + rng.uniform(0.0, 4.0);
    let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
    gamma + sign * magnitude
}

fn fd_suite(provider: GradProvider, kind: ActivationKind, probes: usize) -> Result<FdSuite> {
    let w = LossWeights {
        lambda: 0.01,
        lambda1: if kind == ActivationKind::Relu { 0.0 } else { 0.1 },
        // The finite difference sees the full dependence on gamma, so the
        // analytic side must not detach the error.
        detach_error_in_u: false,
    };
    let mut rng = Rng::new(1001 + kind as u64);
    let mut max_rel = [0.0f64; 4];
    for _ in 0..probes {
        let raw = RawHead::new(
            rng.uniform(-3.0, 3.0),
            draw_channel(&mut rng, kind),
            draw_channel(&mut rng, kind),
            draw_channel(&mut rng, kind),
        );
        let y = draw_target(&mut rng, raw.o_gamma);
        let analytic = provider(&raw, y, &w, kind)?;
        let fd = evireg_core::grad_check(
            |r| total_loss(r, y, &w, kind).map(|b| b.total),
            &raw,
            FD_STEP,
        )?;
        let a = analytic.as_array();
        let f = fd.as_array();
        for c in 0..4 {
            max_rel[c] = max_rel[c].max(rel_err(a[c], f[c]));
        }
    }
    let failing = CHANNEL_NAMES
        .iter()
        .enumerate()
        .filter(|&(c, _)| max_rel[c] >= FD_TOLERANCE)
        .map(|(_, name)| name.to_string())
        .collect();
    Ok(FdSuite {
        activation: activation_name(kind).to_string(),
        probes,
        max_rel_err: max_rel,
        tolerance: FD_TOLERANCE,
        failing_channels: failing,
    })
}

fn saturation_row(
    provider: GradProvider,
    kind: ActivationKind,
    probes: usize,
) -> Result<SaturationRow> {
    let w = LossWeights {
        lambda: 0.01,
        lambda1: 0.0,
        detach_error_in_u: true,
    };
    let mut rng = Rng::new(2001 + kind as u64);
    let mut max_abs = 0.0f64;
    for _ in 0..probes {
        let o_alpha = match kind {
            // Deep saturation; the bound must hold from -30 down.
            ActivationKind::Softplus | ActivationKind::Exp => rng.uniform(-60.0, -30.0),
            // Anywhere strictly below the kink.
            ActivationKind::Relu => rng.uniform(-5.0, -0.01),
        };
        let raw = RawHead::new(
            rng.uniform(-3.0, 3.0),
            rng.uniform(-3.0, 3.0),
            o_alpha,
            rng.uniform(-3.0, 3.0),
        );
        let y = draw_target(&mut rng, raw.o_gamma);
        let g = provider(&raw, y, &w, kind)?;
        max_abs = max_abs.max(g.d_o_alpha.abs());
    }
    let bound = if kind == ActivationKind::Relu {
        0.0
    } else {
        SATURATION_BOUND
    };
    Ok(SaturationRow {
        activation: activation_name(kind).to_string(),
        probes,
        max_abs_grad_alpha: max_abs,
        bound,
        pass: max_abs <= bound,
    })
}

fn escape_suite(probes_per_depth: usize) -> Result<EscapeSuite> {
    let kind = ActivationKind::Softplus;
    let depths = [-1e6, -30.0, 0.0, 30.0, 1e6];
    let mut rng = Rng::new(3001);
    let mut max_ulp = 0u64;
    let mut max_fd_rel = 0.0f64;
    let mut probes = 0usize;
    for &o_alpha in &depths {
        for _ in 0..probes_per_depth {
            let raw = RawHead::new(rng.uniform(-3.0, 3.0), 0.4, o_alpha, 0.7);
            let y = draw_target(&mut rng, raw.o_gamma);
            let expected = -(y - raw.o_gamma).abs();
            let g = unc_grad_alpha(&raw, y, kind)?;
            max_ulp = max_ulp.max(ulp_distance(g, expected));

            // Independent route: a central difference of the stable escape
            // loss. The loss is linear in o_alpha under SoftPlus, so at
            // moderate depths the difference is clean; at +/-1e6 product
            // rounding swamps it, and the ulp check above carries the claim.
            if o_alpha.abs() <= 30.0 {
                let h = FD_STEP;
                let at = |o: f64| -> Result<f64> {
                    let r = RawHead::new(raw.o_gamma, raw.o_v, o, raw.o_beta);
                    let p = evireg_core::activate_head(&r, kind)?;
                    evireg_core::loss::unc_reg(&r, &p, y, kind)
                };
                let fd = (at(o_alpha + h)? - at(o_alpha - h)?) / (2.0 * h);
                max_fd_rel = max_fd_rel.max(rel_err(fd, expected));
            }
            probes += 1;
        }
    }
    Ok(EscapeSuite {
        probes,
        max_ulp,
        ulp_bound: ESCAPE_ULP_BOUND,
        max_fd_rel_err: max_fd_rel,
        pass: max_ulp <= ESCAPE_ULP_BOUND && max_fd_rel <= 1e-9,
    })
}

/// Draws bivariate raw channels whose scale factor stays well-conditioned,
/// so double-precision finite differences are trustworthy at `1e-6`
/// tolerance: diagonal log-scales in `[-0.5, 0.75]`, off-diagonal in
/// `[-1, 1]`.
fn draw_multi_channels(rng: &mut Rng) -> Vec<f64> {
    vec![
        rng.uniform(-2.0, 2.0),
        rng.uniform(-2.0, 2.0),
        rng.uniform(-0.5, 0.75),
        rng.uniform(-0.5, 0.75),
        rng.uniform(-1.0, 1.0),
        rng.uniform(-2.0, 2.0),
    ]
}

fn multi_suite(fd_probes: usize, saturation_probes: usize) -> Result<MultiSuite> {
    let r = evireg_core::multi::DEFAULT_R;
    let lambda1 = 0.1;
    let mut rng = Rng::new(4001);
    let mut max_rel = [0.0f64; 4]; // mu block, diag block, lower, p_nu

    for _ in 0..fd_probes {
        let p = draw_multi_channels(&mut rng);
        let y = [
            p[0] + rng.uniform(-2.0, 2.0) + 0.05,
            p[1] + rng.uniform(-2.0, 2.0) + 0.05,
        ];
        let raw = RawHeadM::new(2, p.clone())?;
        let analytic = grad_multi(&raw, &y, lambda1, r, false)?;
        for c in 0..6 {
            let mut plus = p.clone();
            plus[c] += FD_STEP;
            let mut minus = p.clone();
            minus[c] -= FD_STEP;
            let at = |probe_p: Vec<f64>| -> Result<f64> {
                let probe = RawHeadM::new(2, probe_p)?;
                let params = evireg_core::transform_multi(&probe)?;
                Ok(mern_nll(&params, &y, r)? + lambda1 * unc_reg_multi(&probe, &y)?)
            };
            let fd = (at(plus)? - at(minus)?) / (2.0 * FD_STEP);
            let block = match c {
                0 | 1 => 0,
                2 | 3 => 1,
                4 => 2,
                _ => 3,
            };
            max_rel[block] = max_rel[block].max(rel_err(analytic[c], fd));
        }
    }

    let mut max_sat = 0.0f64;
    for _ in 0..saturation_probes {
        let mut p = draw_multi_channels(&mut rng);
        p[5] = rng.uniform(-40.0, -12.0);
        let y = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
        let g = grad_multi(&RawHeadM::new(2, p)?, &y, 0.0, r, true)?;
        max_sat = max_sat.max(g[5].abs());
    }

    let mut escape_max_ulp = 0u64;
    for &p_nu in &[-1e6, -12.0, 0.0, 12.0, 1e6] {
        for _ in 0..50 {
            let mut p = draw_multi_channels(&mut rng);
            p[5] = p_nu;
            let y = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let norm = ((y[0] - p[0]).powi(2) + (y[1] - p[1]).powi(2)).sqrt();
            let g = unc_grad_p_nu(&RawHeadM::new(2, p)?, &y)?;
            escape_max_ulp = escape_max_ulp.max(ulp_distance(g, -norm));
        }
    }

    let blocks = ["mu0", "diag", "lower", "p_nu"];
    let failing: Vec<String> = blocks
        .iter()
        .enumerate()
        .filter(|&(i, _)| max_rel[i] >= FD_TOLERANCE)
        .map(|(_, b)| b.to_string())
        .collect();
    let pass = failing.is_empty()
        && max_sat <= MULTI_SATURATION_BOUND
        && escape_max_ulp <= ESCAPE_ULP_BOUND;
    Ok(MultiSuite {
        fd_probes,
        max_rel_err_mu: max_rel[0],
        max_rel_err_diag: max_rel[1],
        max_rel_err_lower: max_rel[2],
        max_rel_err_p_nu: max_rel[3],
        fd_tolerance: FD_TOLERANCE,
        saturation_probes,
        max_abs_grad_p_nu_saturated: max_sat,
        saturation_bound: MULTI_SATURATION_BOUND,
        escape_max_ulp,
        failing,
        pass,
    })
}

/// Runs every suite against the supplied closed-form gradient.
pub fn run_gradcheck(provider: GradProvider) -> Result<GradcheckReport> {
    let kinds = [
        ActivationKind::Softplus,
        ActivationKind::Relu,
        ActivationKind::Exp,
    ];
    let mut fd = Vec::new();
    let mut saturation = Vec::new();
    for kind in kinds {
        fd.push(fd_suite(provider, kind, 1000)?);
        saturation.push(saturation_row(provider, kind, 1000)?);
    }
    let escape = escape_suite(200)?;
    let multi = multi_suite(200, 500)?;
    let pass = fd.iter().all(|s| s.failing_channels.is_empty())
        && saturation.iter().all(|s| s.pass)
        && escape.pass
        && multi.pass;
    Ok(GradcheckReport {
        fd,
        saturation,
        escape,
        multi,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use evireg_core::grad_head;

    #[test]
    fn clean_gradients_pass_every_suite() {
        let report = run_gradcheck(grad_head).unwrap();
        assert!(report.pass, "failing: {:?}", report.failing_channels());
        assert_eq!(report.fd.len(), 3);
        assert_eq!(report.saturation.len(), 3);
        assert_eq!(report.escape.max_ulp, 0);
        assert_eq!(report.multi.escape_max_ulp, 0);
        // ReLU's saturated alpha gradient is exactly zero, not merely small.
        let relu = report
            .saturation
            .iter()
            .find(|s| s.activation == "relu")
            .unwrap();
        assert_eq!(relu.max_abs_grad_alpha, 0.0);
    }

    #[test]
    fn corrupted_v_channel_is_named() {
        fn corrupted(
            raw: &RawHead,
            y: f64,
            w: &LossWeights,
            kind: ActivationKind,
        ) -> evireg_core::Result<HeadGradient> {
            let mut g = grad_head(raw, y, w, kind)?;
            g.d_o_v *= 1.5;
            Ok(g)
        }
        let report = run_gradcheck(corrupted).unwrap();
        assert!(!report.pass);
        let failing = report.failing_channels();
        assert!(
            failing.iter().any(|c| c.ends_with("/v")),
            "expected a v-channel failure, got {failing:?}"
        );
        assert!(
            failing.iter().all(|c| !c.ends_with("/beta")),
            "beta must stay clean, got {failing:?}"
        );
    }

    #[test]
    fn ulp_distance_behaves() {
        assert_eq!(ulp_distance(1.0, 1.0), 0);
        assert_eq!(ulp_distance(1.0, 1.0 + f64::EPSILON), 1);
        assert_eq!(ulp_distance(-1.0, -1.0 - f64::EPSILON), 1);
        assert_eq!(ulp_distance(0.0, -0.0), 0);
        assert!(ulp_distance(1.0, -1.0) > 1_000_000);
    }
}
