//! Evaluation suite: RMSE, predictive log-loss, confidence-cutoff curves,
//! calibration curves, predictive entropy, and saturated-head diagnostics.
//!
//! The Student-t CDF is computed by adaptive quadrature under the angle
//! substitution `s = sqrt(d) * tan(theta)`, which maps the infinite tail onto
//! a bounded interval and turns the integrand into `cos(theta)^(d-1)`; the
//! quadrature is exact for the Cauchy case d = 1.

use crate::error::{EviregError, Result};
use crate::net::{forward, HiddenActivation, MlpWeights};
use crate::nig::{
    activate_head, hua_membership, marginal_params, predict, ActivationKind, NigParams, RawHead,
};
use crate::special::lgamma;

use serde::{Deserialize, Serialize};

/// RMSE over progressively smaller, most-confident subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffCurve {
    /// Strictly increasing fractions in (0, 1].
    pub retained_fractions: Vec<f64>,
    /// RMSE over the `ceil(f * N)` samples with lowest epistemic uncertainty.
    pub rmse_at_fraction: Vec<f64>,
}

/// Observed central-interval coverage against nominal probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub expected_levels: Vec<f64>,
    pub observed_frequencies: Vec<f64>,
    /// Mean over levels of squared (nominal - observed) deviation.
    pub calibration_error: f64,
}

/// Fixed-edge histogram with explicit out-of-range tallies, so histograms
/// from different runs are directly comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges; bin `i` covers `[edges[i], edges[i+1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

/// Summary of how much of a dataset a model maps into the saturated
/// low-evidence region (alpha within epsilon of its lower bound 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuaEscapeReport {
    pub fraction_in_hua: f64,
    pub mean_alpha: f64,
    pub min_alpha: f64,
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(EviregError::invalid_input("rmse of empty input".to_string()));
    }
    if preds.len() != targets.len() {
        return Err(EviregError::shape(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64;
    Ok(mse.sqrt())
}

/// Mean negative log-likelihood of the targets under each sample's marginal
/// predictive distribution.
pub fn predictive_nll(params_list: &[NigParams], targets: &[f64]) -> Result<f64> {
    if params_list.is_empty() {
        return Err(EviregError::invalid_input(
            "predictive nll of empty input".to_string(),
        ));
    }
    if params_list.len() != targets.len() {
        return Err(EviregError::shape(format!(
            "{} parameter sets vs {} targets",
            params_list.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (params, &y) in params_list.iter().zip(targets) {
        total += crate::loss::nll_loss(params, y)?;
    }
    Ok(total / params_list.len() as f64)
}

/// Predictive NLL reported in original target units when the model worked in
/// z-scored target space: the change of variables adds `ln(target_std)` per
/// sample.
pub fn predictive_nll_original_units(
    params_list: &[NigParams],
    targets: &[f64],
    target_std: f64,
) -> Result<f64> {
    if !(target_std > 0.0 && target_std.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "target_std must be positive and finite, got {target_std}"
        )));
    }
    Ok(predictive_nll(params_list, targets)? + target_std.ln())
}

/// Sorts samples by epistemic uncertainty ascending (stable, so ties keep
/// their original order) and reports RMSE over the first `ceil(f * N)`
/// samples for each requested fraction.
pub fn cutoff_curve(
    params_list: &[NigParams],
    targets: &[f64],
    fractions: &[f64],
) -> Result<CutoffCurve> {
    if params_list.is_empty() {
        return Err(EviregError::invalid_input(
            "cutoff curve of empty input".to_string(),
        ));
    }
    if params_list.len() != targets.len() {
        return Err(EviregError::shape(format!(
            "{} parameter sets vs {} targets",
            params_list.len(),
            targets.len()
        )));
    }
    if fractions.is_empty() {
        return Err(EviregError::invalid_input(
            "at least one retained fraction is required".to_string(),
        ));
    }
    for w in fractions.windows(2) {
        if w[1] <= w[0] {
            return Err(EviregError::invalid_input(
                "fractions must be strictly increasing".to_string(),
            ));
        }
    }
    if fractions[0] <= 0.0 || *fractions.last().unwrap() > 1.0 {
        return Err(EviregError::invalid_input(
            "fractions must lie in (0, 1]".to_string(),
        ));
    }
    let summaries = params_list
        .iter()
        .map(predict)
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..summaries.len()).collect();
    order.sort_by(|&a, &b| {
        summaries[a]
            .epistemic
            .partial_cmp(&summaries[b].epistemic)
            .expect("epistemic uncertainties are finite")
    });
    let n = order.len();
    let mut rmse_at_fraction = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let k = ((f * n as f64).ceil() as usize).clamp(1, n);
        let preds: Vec<f64> = order[..k].iter().map(|&i| summaries[i].mean).collect();
        let kept: Vec<f64> = order[..k].iter().map(|&i| targets[i]).collect();
        rmse_at_fraction.push(rmse(&preds, &kept)?);
    }
    Ok(CutoffCurve {
        retained_fractions: fractions.to_vec(),
        rmse_at_fraction,
    })
}

/// The standard 19 calibration levels 0.05, 0.10, ..., 0.95.
pub fn default_calibration_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Observed coverage of central predictive intervals at each nominal level.
///
/// A target sits inside its sample's central-p interval exactly when its
/// two-sided coverage `2 F(|z|) - 1` is at most p, so one CDF evaluation per
/// sample yields every level at once.
pub fn calibration(
    params_list: &[NigParams],
    targets: &[f64],
    levels: &[f64],
) -> Result<CalibrationCurve> {
    if params_list.is_empty() {
        return Err(EviregError::invalid_input(
            "calibration of empty input".to_string(),
        ));
    }
    if params_list.len() != targets.len() {
        return Err(EviregError::shape(format!(
            "{} parameter sets vs {} targets",
            params_list.len(),
            targets.len()
        )));
    }
    if levels.is_empty()
        || levels.iter().any(|&p| !(p > 0.0 && p < 1.0))
        || levels.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(EviregError::invalid_input(
            "levels must be strictly increasing within (0, 1)".to_string(),
        ));
    }
    let mut coverages = Vec::with_capacity(params_list.len());
    for (params, &y) in params_list.iter().zip(targets) {
        let st = marginal_params(params)?;
        let z = (y - st.loc) / st.scale_sq.sqrt();
        coverages.push(2.0 * student_t_cdf(z.abs(), st.dof)? - 1.0);
    }
    let n = coverages.len() as f64;
    let observed: Vec<f64> = levels
        .iter()
        .map(|&p| coverages.iter().filter(|&&c| c <= p).count() as f64 / n)
        .collect();
    let calibration_error = levels
        .iter()
        .zip(&observed)
        .map(|(&p, &o)| (p - o) * (p - o))
        .sum::<f64>()
        / levels.len() as f64;
    Ok(CalibrationCurve {
        expected_levels: levels.to_vec(),
        observed_frequencies: observed,
        calibration_error,
    })
}

/// CDF of the standardized Student-t distribution with `dof` degrees of
/// freedom, by adaptive Simpson quadrature (absolute tolerance about 1e-8).
pub fn student_t_cdf(z: f64, dof: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(EviregError::invalid_input(format!(
            "cdf argument must be finite, got {z}"
        )));
    }
    if !(dof > 0.0 && dof.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "degrees of freedom must be positive and finite, got {dof}"
        )));
    }
    let a = z.abs();
    if a == 0.0 {
        return Ok(0.5);
    }
    let phi = (a / dof.sqrt()).atan();
    // Half-integral prefactor Gamma((d+1)/2) / (sqrt(pi) Gamma(d/2)).
    let coeff = (lgamma(0.5 * (dof + 1.0))? - lgamma(0.5 * dof)?).exp()
        / std::f64::consts::PI.sqrt();
    let power = dof - 1.0;
    let integrand = |theta: f64| theta.cos().powf(power);
    // Split the bounded domain before adapting; keeps the panels short where
    // large-dof integrands decay quickly.
    let panels = 4;
    let tol = 1e-10 / coeff.max(1.0);
    let mut integral = 0.0;
    for i in 0..panels {
        let lo = phi * i as f64 / panels as f64;
        let hi = phi * (i + 1) as f64 / panels as f64;
        integral += adaptive_simpson(&integrand, lo, hi, tol)?;
    }
    let half = (coeff * integral).min(0.5);
    Ok(if z > 0.0 { 0.5 + half } else { 0.5 - half })
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fb, fm, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(EviregError::numeric(
            "quadrature failed to converge".to_string(),
        ));
    }
    Ok(simpson_step(f, a, m, fa, fm, flm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, fb, frm, right, 0.5 * tol, depth - 1)?)
}

/// Half-width q of the central interval holding probability `p` under the
/// standardized Student-t: `F(q) - F(-q) = p`, found by bisection.
pub fn student_t_central_interval(p: f64, dof: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EviregError::invalid_input(format!(
            "interval probability must lie in (0, 1), got {p}"
        )));
    }
    let target = 0.5 * (1.0 + p);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while student_t_cdf(hi, dof)? < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(EviregError::numeric(
                "interval bracket expansion failed".to_string(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gaussian differential entropy `0.5 * ln(2 pi e sigma^2)` with the
/// aleatoric variance as `sigma^2`.
pub fn entropy(aleatoric: f64) -> Result<f64> {
    if !(aleatoric > 0.0 && aleatoric.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "entropy needs a positive finite variance, got {aleatoric}"
        )));
    }
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * aleatoric).ln())
}

/// Histogram over `bins` equal-width bins between `lo` and `hi`; values
/// outside land in the underflow/overflow tallies.
pub fn entropy_histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(EviregError::invalid_input(
            "histogram needs at least one bin".to_string(),
        ));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(EviregError::invalid_input(format!(
            "histogram range [{lo}, {hi}) is invalid"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    let mut underflow = 0;
    let mut overflow = 0;
    for &v in values {
        if !v.is_finite() {
            return Err(EviregError::numeric(format!(
                "histogram input contains non-finite value {v}"
            )));
        }
        if v < lo {
            underflow += 1;
        } else if v >= hi {
            overflow += 1;
        } else {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
    }
    Ok(Histogram {
        edges,
        counts,
        underflow,
        overflow,
    })
}

/// Runs every input through the network, activates the four-channel head,
/// and summarizes where alpha sits relative to its lower bound.
pub fn hua_escape_report(
    weights: &MlpWeights,
    hidden: HiddenActivation,
    kind: ActivationKind,
    inputs: &[Vec<f64>],
    epsilon: f64,
) -> Result<HuaEscapeReport> {
    if inputs.is_empty() {
        return Err(EviregError::invalid_input(
            "saturation report of empty input".to_string(),
        ));
    }
    let mut in_hua = 0usize;
    let mut alpha_sum = 0.0;
    let mut alpha_min = f64::INFINITY;
    for x in inputs {
        let (out, _) = forward(weights, hidden, x)?;
        if out.len() != 4 {
            return Err(EviregError::shape(format!(
                "head has {} channels; the saturation report needs 4",
                out.len()
            )));
        }
        let raw = RawHead::from_array([out[0], out[1], out[2], out[3]]);
        let params = activate_head(&raw, kind)?;
        if hua_membership(&params, epsilon)? {
            in_hua += 1;
        }
        alpha_sum += params.alpha;
        alpha_min = alpha_min.min(params.alpha);
    }
    Ok(HuaEscapeReport {
        fraction_in_hua: in_hua as f64 / inputs.len() as f64,
        mean_alpha: alpha_sum / inputs.len() as f64,
        min_alpha: alpha_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_close(rmse(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0, 1e-15);
        assert_close(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt(), 1e-15);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn predictive_nll_matches_marginal_logpdf_and_translates() {
        let params: Vec<NigParams> = vec![
            NigParams::new(0.0, 1.0, 2.0, 1.0),
            NigParams::new(1.5, 0.7, 3.0, 2.0),
        ];
        let targets = [1.0, 0.2];
        let nll = predictive_nll(&params, &targets).unwrap();
        let mut direct = 0.0;
        for (p, &y) in params.iter().zip(&targets) {
            let st = marginal_params(p).unwrap();
            direct -= crate::nig::student_t_logpdf(y, &st).unwrap();
        }
        assert_close(nll, direct / 2.0, 1e-12);
        // Shifting gamma and y together changes nothing.
        let shifted: Vec<NigParams> = params
            .iter()
            .map(|p| NigParams::new(p.gamma + 10.0, p.v, p.alpha, p.beta))
            .collect();
        let shifted_targets = [11.0, 10.2];
        assert_close(
            predictive_nll(&shifted, &shifted_targets).unwrap(),
            nll,
            1e-12,
        );
        // Original-unit correction adds ln 2 for target_std = 2.
        assert_close(
            predictive_nll_original_units(&params, &targets, 2.0).unwrap(),
            nll + 2.0f64.ln(),
            1e-15,
        );
    }

    #[test]
    fn student_t_cdf_matches_frozen_references() {
        // Reference values computed with 50-digit arithmetic.
        let cases = [
            (0.5, 1.0, 0.64758361765043327418),
            (1.0, 1.0, 0.75),
            (1.5, 3.0, 0.88470806737758847386),
            (2.0, 4.0, 0.94194173824159220275),
            (0.7, 10.0, 0.75005621491355781892),
            (2.5, 30.0, 0.99094217546596665295),
            (1.0, 1e6, 0.84134462508321093536),
            (3.0, 2.4, 0.96181886821336559717),
            (-1.2, 5.0, 0.1419455283530510805),
        ];
        for (z, d, expected) in cases {
            assert_close(student_t_cdf(z, d).unwrap(), expected, 2e-8);
        }
    }

    #[test]
    fn student_t_cdf_is_exact_for_cauchy() {
        // With one degree of freedom the substituted integrand is constant,
        // so Simpson incurs no quadrature error at all.
        for z in [-7.0f64, -1.3, -0.2, 0.4, 1.0, 2.9, 55.0] {
            let exact = 0.5 + z.atan() / std::f64::consts::PI;
            assert_close(student_t_cdf(z, 1.0).unwrap(), exact, 1e-13);
        }
    }

    #[test]
    fn student_t_cdf_symmetry_and_monotonicity() {
        for d in [0.7, 2.0, 9.0, 150.0] {
            let mut prev = 0.0;
            for i in 0..40 {
                let z = -4.0 + 0.2 * i as f64;
                let f = student_t_cdf(z, d).unwrap();
                let g = student_t_cdf(-z, d).unwrap();
                assert_close(f + g, 1.0, 1e-14);
                assert!(f >= prev, "cdf not monotone at z={z}, d={d}");
                prev = f;
            }
        }
        assert_eq!(student_t_cdf(0.0, 3.0).unwrap(), 0.5);
        assert!(student_t_cdf(1.0, 0.0).is_err());
        assert!(student_t_cdf(f64::NAN, 3.0).is_err());
    }

    #[test]
    fn central_interval_matches_frozen_quantiles() {
        // Two-sided Student-t critical values from 50-digit arithmetic.
        assert_close(
            student_t_central_interval(0.95, 3.0).unwrap(),
            3.182446305284263,
            1e-6,
        );
        assert_close(student_t_central_interval(0.5, 1.0).unwrap(), 1.0, 1e-9);
        assert_close(
            student_t_central_interval(0.9, 8.0).unwrap(),
            1.8595480375228424,
            1e-6,
        );
        assert!(student_t_central_interval(0.0, 3.0).is_err());
        assert!(student_t_central_interval(1.0, 3.0).is_err());
    }

    #[test]
    fn central_interval_inverts_the_cdf() {
        for (p, d) in [(0.3, 2.0), (0.8, 5.5), (0.95, 40.0)] {
            let q = student_t_central_interval(p, d).unwrap();
            let covered =
                student_t_cdf(q, d).unwrap() - student_t_cdf(-q, d).unwrap();
            assert_close(covered, p, 1e-7);
        }
    }

    #[test]
    fn cutoff_curve_degenerate_ordering_is_flat() {
        let params: Vec<NigParams> =
            (0..10).map(|_| NigParams::new(0.0, 1.0, 2.0, 1.0)).collect();
        let targets: Vec<f64> = (0..10).map(|i| i as f64 / 3.0 - 1.0).collect();
        let global = {
            let preds = vec![0.0; 10];
            rmse(&preds, &targets).unwrap()
        };
        let curve = cutoff_curve(&params, &targets, &[0.2, 0.5, 1.0]).unwrap();
        assert_eq!(curve.rmse_at_fraction[2], global);
        // Stable ties: the first ceil(0.2*10)=2 samples are the original
        // first two.
        let first_two = rmse(&[0.0, 0.0], &targets[..2]).unwrap();
        assert_close(curve.rmse_at_fraction[0], first_two, 1e-15);
        assert_close(curve.rmse_at_fraction[1], rmse(&vec![0.0; 5], &targets[..5]).unwrap(), 1e-15);
    }

    #[test]
    fn cutoff_curve_tracks_uncertainty_ordered_error() {
        // Construct samples whose epistemic uncertainty equals their |error|:
        // alpha=2, v=1 makes epistemic = beta.
        let mut rng = Rng::new(31);
        let mut params = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..100 {
            let err = rng.uniform(0.01, 3.0);
            params.push(NigParams::new(0.0, 1.0, 2.0, err));
            targets.push(if rng.next_f64() < 0.5 { err } else { -err });
        }
        let fractions: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let curve = cutoff_curve(&params, &targets, &fractions).unwrap();
        for w in curve.rmse_at_fraction.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "curve decreased: {w:?}");
        }
    }

    #[test]
    fn cutoff_curve_rejects_bad_fractions() {
        let params = vec![NigParams::new(0.0, 1.0, 2.0, 1.0)];
        let targets = [0.0];
        assert!(cutoff_curve(&params, &targets, &[]).is_err());
        assert!(cutoff_curve(&params, &targets, &[0.5, 0.5]).is_err());
        assert!(cutoff_curve(&params, &targets, &[0.0, 1.0]).is_err());
        assert!(cutoff_curve(&params, &targets, &[0.5, 1.1]).is_err());
    }

    #[test]
    fn calibration_concentrated_targets_cover_every_level() {
        let params: Vec<NigParams> =
            (0..20).map(|i| NigParams::new(i as f64, 1.0, 2.0, 1.0)).collect();
        let targets: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let levels = default_calibration_levels();
        let curve = calibration(&params, &targets, &levels).unwrap();
        assert!(curve.observed_frequencies.iter().all(|&o| o == 1.0));
        let expected_err = levels.iter().map(|p| (1.0 - p) * (1.0 - p)).sum::<f64>()
            / levels.len() as f64;
        assert_close(curve.calibration_error, expected_err, 1e-12);
    }

    #[test]
    fn calibration_observed_frequencies_are_nested() {
        let mut rng = Rng::new(77);
        let mut params = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..200 {
            params.push(NigParams::new(
                rng.uniform(-2.0, 2.0),
                rng.uniform(0.5, 2.0),
                rng.uniform(1.5, 4.0),
                rng.uniform(0.5, 2.0),
            ));
            targets.push(rng.uniform(-4.0, 4.0));
        }
        let curve = calibration(&params, &targets, &default_calibration_levels()).unwrap();
        for w in curve.observed_frequencies.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn calibration_is_self_consistent_on_model_samples() {
        // Targets drawn from each sample's own predictive distribution must
        // be calibrated up to Monte-Carlo noise.
        let mut rng = Rng::new(2024);
        let n = 10_000;
        let mut params = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let p = NigParams::new(
                rng.uniform(-5.0, 5.0),
                rng.uniform(0.5, 3.0),
                rng.uniform(1.5, 5.0),
                rng.uniform(0.5, 3.0),
            );
            targets.push(crate::nig::sample_observation(&p, &mut rng).unwrap());
            params.push(p);
        }
        let curve = calibration(&params, &targets, &default_calibration_levels()).unwrap();
        assert!(
            curve.calibration_error < 0.002,
            "calibration error {}",
            curve.calibration_error
        );
    }

    #[test]
    fn entropy_reference_points() {
        // 1/(2 pi e) and 0.5 ln(2 pi e) to 20 digits.
        assert_close(entropy(0.05854983152431916069).unwrap(), 0.0, 1e-15);
        assert_close(entropy(1.0).unwrap(), 1.4189385332046727418, 1e-15);
        let h1 = entropy(0.37).unwrap();
        let h2 = entropy(0.74).unwrap();
        assert_close(h2 - h1, 0.5 * 2.0f64.ln(), 1e-13);
        assert!(entropy(0.0).is_err());
        assert!(entropy(-1.0).is_err());
    }

    #[test]
    fn histogram_bins_and_out_of_range_tallies() {
        let h = entropy_histogram(&[0.1, 0.9, 1.5, 2.5, -3.0, 10.0, 1.5], 0.0, 2.0, 4).unwrap();
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(h.counts, vec![1, 1, 0, 2]);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 2);
        assert!(entropy_histogram(&[1.0], 0.0, 0.0, 4).is_err());
        assert!(entropy_histogram(&[f64::NAN], 0.0, 1.0, 4).is_err());
    }

    #[test]
    fn hua_escape_report_reflects_output_bias() {
        use crate::net::{hua_init, init, MlpConfig};
        let cfg = MlpConfig {
            input_dim: 1,
            hidden_widths: vec![8],
            output_dim: 4,
            hidden_activation: HiddenActivation::Relu,
            seed: 3,
        };
        let inputs: Vec<Vec<f64>> = (0..=40).map(|i| vec![-4.0 + 0.2 * i as f64]).collect();

        let mut saturated = init(&cfg).unwrap();
        hua_init(&mut saturated, 2, -20.0).unwrap();
        let report = hua_escape_report(
            &saturated,
            HiddenActivation::Relu,
            ActivationKind::Softplus,
            &inputs,
            crate::nig::DEFAULT_HUA_EPSILON,
        )
        .unwrap();
        assert_eq!(report.fraction_in_hua, 1.0);
        assert!(report.mean_alpha - 1.0 < 1e-6);
        assert!(report.min_alpha >= 1.0);

        let mut confident = init(&cfg).unwrap();
        hua_init(&mut confident, 2, 5.0).unwrap();
        let report = hua_escape_report(
            &confident,
            HiddenActivation::Relu,
            ActivationKind::Softplus,
            &inputs,
            1e-3,
        )
        .unwrap();
        assert_eq!(report.fraction_in_hua, 0.0);
        assert!(report.mean_alpha > 5.0);
    }
}
