//! Multivariate evidential head: Normal-Inverse-Wishart parameters over an
//! n-dimensional Gaussian observation model.
//!
//! A head for n outputs emits `m = n(n+3)/2 + 1` raw values, laid out as
//! `[mu0 (n) | diagonal log-scales (n) | strict lower triangle (n(n-1)/2,
//! row-major) | p_nu]`. [`transform_multi`] maps them to a mean `mu0`, a
//! lower-triangular scale factor `L` with positive diagonal, and a degrees-of
//! -freedom value `nu` confined to the open interval `(n+1, n^2+4n+1)` by a
//! scaled tanh.
//!
//! The bounded `nu` parametrization saturates just like a positivity
//! transform: for very negative `p_nu` the loss gradient on that channel
//! carries a `1 - tanh^2` factor and vanishes, freezing `nu` near its pole.
//! The escape regularizer [`unc_reg_multi`] reduces algebraically to
//! `-||y - mu0|| * p_nu`, whose `p_nu` gradient is constant, restoring an
//! escape route.

use crate::error::{EviregError, Result};
use crate::special::{digamma, lgamma};

use serde::{Deserialize, Serialize};

/// Default prior pseudo-count used by the multivariate NLL.
pub const DEFAULT_R: f64 = 1.0;

/// Raw multivariate head outputs for an n-dimensional target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeadM {
    n: usize,
    p: Vec<f64>,
}

impl RawHeadM {
    /// Number of raw outputs required for an n-dimensional head.
    pub fn expected_len(n: usize) -> usize {
        n * (n + 3) / 2 + 1
    }

    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(EviregError::invalid_input(format!(
                "multivariate head requires n >= 2, got {n}"
            )));
        }
        if p.len() != Self::expected_len(n) {
            return Err(EviregError::shape(format!(
                "raw multivariate head for n = {n} requires {} values, got {}",
                Self::expected_len(n),
                p.len()
            )));
        }
        for (i, &value) in p.iter().enumerate() {
            if !value.is_finite() {
                return Err(EviregError::invalid_input(format!(
                    "raw multivariate head channel {i} is not finite: {value}"
                )));
            }
        }
        Ok(RawHeadM { n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// The raw degrees-of-freedom channel (last entry).
    pub fn p_nu(&self) -> f64 {
        self.p[self.p.len() - 1]
    }
}

/// Normal-Inverse-Wishart parameters: mean `mu0`, lower-triangular scale
/// factor `scale_tril` with positive diagonal, degrees of freedom `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub mu0: Vec<f64>,
    /// Full n x n matrix; entries above the diagonal are zero.
    pub scale_tril: Vec<Vec<f64>>,
    pub nu: f64,
}

impl NiwParams {
    pub fn n(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mu0.len();
        if n < 2 {
            return Err(EviregError::invalid_input(format!(
                "multivariate parameters require n >= 2, got {n}"
            )));
        }
        if self.scale_tril.len() != n || self.scale_tril.iter().any(|row| row.len() != n) {
            return Err(EviregError::shape(format!(
                "scale_tril must be {n} x {n}"
            )));
        }
        for value in self.mu0.iter() {
            if !value.is_finite() {
                return Err(EviregError::invalid_input(format!(
                    "mu0 entry is not finite: {value}"
                )));
            }
        }
        for (j, row) in self.scale_tril.iter().enumerate() {
            for (k, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(EviregError::invalid_input(format!(
                        "scale_tril[{j}][{k}] is not finite: {value}"
                    )));
                }
                if k > j && value != 0.0 {
                    return Err(EviregError::invalid_input(format!(
                        "scale_tril[{j}][{k}] must be zero above the diagonal, got {value}"
                    )));
                }
                if k == j && !(value > 0.0) {
                    return Err(EviregError::invalid_input(format!(
                        "scale_tril diagonal entry [{j}] must be positive, got {value}"
                    )));
                }
            }
        }
        // nu may sit arbitrarily close to its n+1 pole (loss evaluation is
        // legal there) but must be a positive finite number.
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(EviregError::invalid_input(format!(
                "nu must be positive and finite, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// Multivariate point prediction with its uncertainty split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPrediction {
    /// Predicted mean, `mu0`.
    pub mean: Vec<f64>,
    /// Expected observation covariance, `nu / (nu - n - 1) L L^T`.
    pub aleatoric: Vec<Vec<f64>>,
    /// Covariance of the mean itself, `aleatoric / nu`.
    pub epistemic: Vec<Vec<f64>>,
    /// The 2-D experiment's reported uncertainty, `L L^T / (nu - 3)`;
    /// only defined for n = 2.
    pub experiment_uncertainty: Option<Vec<Vec<f64>>>,
}

/// Lower bound of the `nu` interval for an n-dimensional head.
pub fn nu_lower(n: usize) -> f64 {
    n as f64 + 1.0
}

/// Upper bound of the `nu` interval for an n-dimensional head.
pub fn nu_upper(n: usize) -> f64 {
    let n = n as f64;
    n * n + 4.0 * n + 1.0
}

fn nu_from_p(n: usize, p_nu: f64) -> f64 {
    let nf = n as f64;
    nf * (nf + 5.0) / 2.0 + 1.0 + p_nu.tanh() * nf * (nf + 3.0) / 2.0
}

/// Derivative of `nu` with respect to its raw channel.
fn dnu_dp(n: usize, p_nu: f64) -> f64 {
    let nf = n as f64;
    let t = p_nu.tanh();
    nf * (nf + 3.0) / 2.0 * (1.0 - t * t)
}

/// Maps raw multivariate head outputs to NIW parameters.
///
/// `mu0` passes through; diagonal entries of `L` are exponentials of their
/// log-scales; strict lower-triangle entries pass through; `nu` is the
/// tanh-bounded map onto `(n+1, n^2+4n+1)`.
pub fn transform_multi(raw: &RawHeadM) -> Result<NiwParams> {
    let n = raw.n;
    let p = &raw.p;
    let mu0 = p[..n].to_vec();
    let mut scale_tril = vec![vec![0.0; n]; n];
    for j in 0..n {
        scale_tril[j][j] = p[n + j].exp();
    }
    let mut idx = 2 * n;
    for j in 1..n {
        for k in 0..j {
            scale_tril[j][k] = p[idx];
            idx += 1;
        }
    }
    Ok(NiwParams {
        mu0,
        scale_tril,
        nu: nu_from_p(n, p[p.len() - 1]),
    })
}

/// Flat row-major product `L L^T` for a lower-triangular `L`.
fn l_lt(scale_tril: &[Vec<f64>]) -> Vec<f64> {
    let n = scale_tril.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            // L is lower triangular: L[i][k] = 0 for k > i.
            for k in 0..=i.min(j) {
                acc += scale_tril[i][k] * scale_tril[j][k];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Cholesky factor (lower) of a symmetric positive-definite flat matrix.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(EviregError::numeric(format!(
                        "matrix is not positive definite (pivot {sum} at index {i})"
                    )));
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `R R^T x = b` given the Cholesky factor `R`.
fn chol_solve(r: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    // Forward substitution R z = b.
    for i in 0..n {
        for k in 0..i {
            x[i] -= r[i * n + k] * x[k];
        }
        x[i] /= r[i * n + i];
    }
    // Back substitution R^T x = z.
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= r[k * n + i] * x[k];
        }
        x[i] /= r[i * n + i];
    }
    x
}

fn check_multi_target(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(EviregError::shape(format!(
            "target has {} entries but the head is {n}-dimensional",
            y.len()
        )));
    }
    for &value in y {
        if !value.is_finite() {
            return Err(EviregError::invalid_input(format!(
                "target entry is not finite: {value}"
            )));
        }
    }
    Ok(())
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "prior pseudo-count r must be positive and finite, got {r}"
        )));
    }
    Ok(())
}

/// Negative log-likelihood of `y` under the multivariate evidential head
/// (constant terms dropped):
///
/// `lnGamma((nu-n+1)/2) - lnGamma((nu+1)/2) + (n/2) ln(r + nu)
///  - nu * sum_j ln(L_jj)
///  + ((nu+1)/2) ln det(L L^T + (y - mu0)(y - mu0)^T / (r + nu))`
///
/// The determinant is evaluated through a Cholesky factorization of the
/// inner matrix, which is positive definite for any valid parameters.
pub fn mern_nll(params: &NiwParams, y: &[f64], r: f64) -> Result<f64> {
    params.validate()?;
    check_r(r)?;
    let n = params.n();
    check_multi_target(y, n)?;
    let nu = params.nu;
    let c = 1.0 / (r + nu);
    let mut m = l_lt(&params.scale_tril);
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += c * (y[i] - params.mu0[i]) * (y[j] - params.mu0[j]);
        }
    }
    let chol = cholesky(&m, n)?;
    let logdet: f64 = (0..n).map(|i| 2.0 * chol[i * n + i].ln()).sum();
    let sum_log_diag: f64 = (0..n).map(|j| params.scale_tril[j][j].ln()).sum();
    let nf = n as f64;
    Ok(lgamma((nu - nf + 1.0) / 2.0)? - lgamma((nu + 1.0) / 2.0)?
        + nf / 2.0 * (r + nu).ln()
        - nu * sum_log_diag
        + (nu + 1.0) / 2.0 * logdet)
}

/// Splits the predictive uncertainty of valid NIW parameters.
///
/// Requires `nu > n + 1`; at the pole the aleatoric covariance diverges.
pub fn predict_multi(params: &NiwParams) -> Result<MultiPrediction> {
    params.validate()?;
    let n = params.n();
    let nf = n as f64;
    if params.nu <= nf + 1.0 {
        return Err(EviregError::invalid_input(format!(
            "predict_multi requires nu > n + 1 = {}, got {}",
            nf + 1.0,
            params.nu
        )));
    }
    let llt = l_lt(&params.scale_tril);
    let to_nested = |scale: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| llt[i * n + j] * scale).collect())
            .collect()
    };
    let aleatoric_scale = params.nu / (params.nu - nf - 1.0);
    let experiment_uncertainty = if n == 2 {
        Some(to_nested(1.0 / (params.nu - 3.0)))
    } else {
        None
    };
    Ok(MultiPrediction {
        mean: params.mu0.clone(),
        aleatoric: to_nested(aleatoric_scale),
        epistemic: to_nested(aleatoric_scale / params.nu),
        experiment_uncertainty,
    })
}

/// Multivariate escape regularizer,
/// `-(1/2) ||y - mu0|| ln((n^2+3n) / (n^2+4n+1 - nu) - 1)`.
///
/// With the tanh-bounded `nu` the log argument is exactly `e^(2 p_nu)`, so
/// the whole term reduces to `-||y - mu0|| * p_nu`; that stable form is used
/// here, and its `p_nu` gradient is the constant `-||y - mu0||`.
pub fn unc_reg_multi(raw: &RawHeadM, y: &[f64]) -> Result<f64> {
    let n = raw.n;
    check_multi_target(y, n)?;
    let norm = error_norm(raw, y);
    Ok(-norm * raw.p_nu())
}

/// Standalone gradient of [`unc_reg_multi`] with respect to the raw `p_nu`
/// channel, with the error magnitude held fixed: exactly `-||y - mu0||` at
/// every `p_nu`, including deep tanh saturation.
pub fn unc_grad_p_nu(raw: &RawHeadM, y: &[f64]) -> Result<f64> {
    check_multi_target(y, raw.n)?;
    Ok(-error_norm(raw, y))
}

fn error_norm(raw: &RawHeadM, y: &[f64]) -> f64 {
    y.iter()
        .zip(&raw.p[..raw.n])
        .map(|(yi, mi)| (yi - mi) * (yi - mi))
        .sum::<f64>()
        .sqrt()
}

/// Exact gradient of `mern_nll + lambda1 * unc_reg_multi` with respect to the
/// raw multivariate head outputs, in the raw layout order.
///
/// All channels are closed-form: the `mu0` block is `-(nu+1) c M^-1 e`, the
/// diagonal log-scale block is `-nu + (nu+1) (M^-1 L)_jj L_jj`, the strict
/// lower triangle is `(nu+1) (M^-1 L)_jk`, and the `p_nu` channel combines
/// the NLL's `nu` sensitivity with the `(n(n+3)/2)(1 - tanh^2 p_nu)` chain
/// factor plus the constant `-lambda1 ||y - mu0||` escape pull.
///
/// With `detach_error_in_u` the error norm in the escape term is treated as a
/// constant, so that term contributes nothing to the `mu0` block.
pub fn grad_multi(
    raw: &RawHeadM,
    y: &[f64],
    lambda1: f64,
    r: f64,
    detach_error_in_u: bool,
) -> Result<Vec<f64>> {
    let n = raw.n;
    check_multi_target(y, n)?;
    check_r(r)?;
    if !(lambda1 >= 0.0 && lambda1.is_finite()) {
        return Err(EviregError::invalid_input(format!(
            "lambda1 must be >= 0 and finite, got {lambda1}"
        )));
    }
    let params = transform_multi(raw)?;
    let nu = params.nu;
    let nf = n as f64;
    let c = 1.0 / (r + nu);
    let e: Vec<f64> = (0..n).map(|i| y[i] - params.mu0[i]).collect();

    let mut m = l_lt(&params.scale_tril);
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += c * e[i] * e[j];
        }
    }
    let chol = cholesky(&m, n)?;
    let logdet: f64 = (0..n).map(|i| 2.0 * chol[i * n + i].ln()).sum();
    let minv_e = chol_solve(&chol, n, &e);
    let quad: f64 = e.iter().zip(&minv_e).map(|(a, b)| a * b).sum();

    // M^-1 L, column by column.
    let mut minv_l = vec![0.0; n * n];
    for col in 0..n {
        let column: Vec<f64> = (0..n).map(|i| params.scale_tril[i][col]).collect();
        let solved = chol_solve(&chol, n, &column);
        for i in 0..n {
            minv_l[i * n + col] = solved[i];
        }
    }

    let mut grad = vec![0.0; raw.p.len()];

    // mu0 block: d logdet / d mu0 = -2 c M^-1 e.
    for i in 0..n {
        grad[i] = -(nu + 1.0) * c * minv_e[i];
    }

    // Diagonal log-scale block.
    for j in 0..n {
        let ljj = params.scale_tril[j][j];
        grad[n + j] = -nu + (nu + 1.0) * minv_l[j * n + j] * ljj;
    }

    // Strict lower triangle block.
    let mut idx = 2 * n;
    for j in 1..n {
        for k in 0..j {
            grad[idx] = (nu + 1.0) * minv_l[j * n + k];
            idx += 1;
        }
    }

    // p_nu channel.
    let sum_log_diag: f64 = (0..n).map(|j| params.scale_tril[j][j].ln()).sum();
    let dnll_dnu = 0.5 * digamma((nu - nf + 1.0) / 2.0)? - 0.5 * digamma((nu + 1.0) / 2.0)?
        + nf / (2.0 * (r + nu))
        - sum_log_diag
        + 0.5 * logdet
        - (nu + 1.0) / 2.0 * c * c * quad;
    let last = raw.p.len() - 1;
    grad[last] = dnll_dnu * dnu_dp(n, raw.p_nu());

    if lambda1 > 0.0 {
        let norm = error_norm(raw, y);
        grad[last] -= lambda1 * norm;
        if !detach_error_in_u && norm > 0.0 {
            // d(-||e|| p_nu)/d mu0 = p_nu e / ||e||.
            for i in 0..n {
                grad[i] += lambda1 * raw.p_nu() * e[i] / norm;
            }
        }
    }

    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (diff {})",
            (actual - expected).abs()
        );
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
    }

    fn raw2(p: [f64; 6]) -> RawHeadM {
        RawHeadM::new(2, p.to_vec()).unwrap()
    }

    #[test]
    fn layout_and_length_checks() {
        assert_eq!(RawHeadM::expected_len(2), 6);
        assert_eq!(RawHeadM::expected_len(3), 10);
        assert!(RawHeadM::new(2, vec![0.0; 5]).is_err());
        assert!(RawHeadM::new(1, vec![0.0; 3]).is_err());
        assert!(RawHeadM::new(2, vec![0.0, 0.0, 0.0, 0.0, 0.0, f64::NAN]).is_err());
    }

    #[test]
    fn transform_at_zero_gives_identity_scale_and_midpoint_nu() {
        let params = transform_multi(&raw2([0.0; 6])).unwrap();
        assert_eq!(params.mu0, vec![0.0, 0.0]);
        assert_eq!(params.scale_tril[0], vec![1.0, 0.0]);
        assert_eq!(params.scale_tril[1], vec![0.0, 1.0]);
        // n = 2: nu = 8 + 5 tanh(p_nu), so p_nu = 0 sits at the midpoint.
        assert_close(params.nu, 8.0, 1e-15);
    }

    #[test]
    fn transform_layout_maps_blocks_in_order() {
        let params = transform_multi(&raw2([0.5, -0.5, 0.1, 0.2, 0.7, 0.3])).unwrap();
        assert_eq!(params.mu0, vec![0.5, -0.5]);
        assert_close(params.scale_tril[0][0], 0.1f64.exp(), 1e-15);
        assert_close(params.scale_tril[1][1], 0.2f64.exp(), 1e-15);
        assert_close(params.scale_tril[1][0], 0.7, 0.0);
        assert_eq!(params.scale_tril[0][1], 0.0);
        assert_close(params.nu, 8.0 + 5.0 * 0.3f64.tanh(), 1e-12);
    }

    #[test]
    fn nu_stays_in_open_interval_and_saturates() {
        for n in [2usize, 3, 4] {
            // Strictly interior while tanh has headroom; beyond |p| ~ 19
            // tanh rounds to +/-1 and nu touches the closed endpoint.
            for &p in &[-18.0, -5.0, 0.0, 5.0, 18.0] {
                let nu = nu_from_p(n, p);
                assert!(nu > nu_lower(n) && nu < nu_upper(n), "n {n} p {p} nu {nu}");
            }
            for &p in &[-50.0, 50.0] {
                let nu = nu_from_p(n, p);
                assert!(nu >= nu_lower(n) && nu <= nu_upper(n), "n {n} p {p} nu {nu}");
            }
        }
        // Deep saturation pins nu against its pole.
        let params = transform_multi(&raw2([0.0, 0.0, 0.0, 0.0, 0.0, -12.0])).unwrap();
        assert!(params.nu - 3.0 < 1e-8, "nu - 3 = {}", params.nu - 3.0);
        assert!(params.nu > 3.0);
    }

    #[test]
    fn mern_nll_zero_residual_reference() {
        // y = mu0, L = I, nu = 8, r = 1: the loss reduces to
        // lnGamma(3.5) - lnGamma(4.5) + ln 9; mpmath gives 0.944461608840851.
        let params = transform_multi(&raw2([0.0; 6])).unwrap();
        let value = mern_nll(&params, &[0.0, 0.0], 1.0).unwrap();
        assert_close(value, 0.944_461_608_840_851_4, 1e-12);
    }

    #[test]
    fn mern_nll_is_translation_invariant() {
        let raw = raw2([0.3, -0.2, 0.1, -0.1, 0.4, 0.6]);
        let params = transform_multi(&raw).unwrap();
        let mut shifted = params.clone();
        shifted.mu0 = vec![0.3 + 7.0, -0.2 - 3.0];
        let a = mern_nll(&params, &[1.0, 0.5], 1.0).unwrap();
        let b = mern_nll(&shifted, &[1.0 + 7.0, 0.5 - 3.0], 1.0).unwrap();
        assert_close(a, b, 1e-10);
    }

    #[test]
    fn mern_nll_rejects_bad_inputs() {
        let params = transform_multi(&raw2([0.0; 6])).unwrap();
        assert!(mern_nll(&params, &[0.0], 1.0).is_err());
        assert!(mern_nll(&params, &[0.0, f64::NAN], 1.0).is_err());
        assert!(mern_nll(&params, &[0.0, 0.0], 0.0).is_err());
        let mut bad = params.clone();
        bad.scale_tril[0][0] = -1.0;
        assert!(mern_nll(&bad, &[0.0, 0.0], 1.0).is_err());
        let mut tri = params;
        tri.scale_tril[0][1] = 0.5;
        assert!(mern_nll(&tri, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn predict_multi_identity_case() {
        let params = transform_multi(&raw2([0.0; 6])).unwrap();
        let pred = predict_multi(&params).unwrap();
        assert_eq!(pred.mean, vec![0.0, 0.0]);
        // nu = 8, n = 2: aleatoric = 8/5 I, epistemic = 1/5 I.
        assert_close(pred.aleatoric[0][0], 1.6, 1e-12);
        assert_close(pred.aleatoric[0][1], 0.0, 0.0);
        assert_close(pred.epistemic[0][0], 0.2, 1e-12);
        let exp = pred.experiment_uncertainty.unwrap();
        // For n = 2 the experiment's normalization nu - 3 coincides with
        // nu - n - 1, so it equals the epistemic part.
        assert_close(exp[0][0], 0.2, 1e-12);
        assert_close(exp[1][1], 0.2, 1e-12);
    }

    #[test]
    fn predict_multi_rejects_nu_at_pole() {
        let mut params = transform_multi(&raw2([0.0; 6])).unwrap();
        params.nu = 3.0;
        assert!(predict_multi(&params).is_err());
        params.nu = 2.9;
        assert!(predict_multi(&params).is_err());
    }

    #[test]
    fn aleatoric_diverges_toward_pole_and_epistemic_scales() {
        let mut prev = f64::NEG_INFINITY;
        for &p_nu in &[2.0, 0.0, -1.0, -2.0, -3.0] {
            let params = transform_multi(&raw2([0.0, 0.0, 0.0, 0.0, 0.0, p_nu])).unwrap();
            let pred = predict_multi(&params).unwrap();
            assert!(pred.aleatoric[0][0] > prev);
            prev = pred.aleatoric[0][0];
            assert_close(
                pred.epistemic[0][0] * params.nu,
                pred.aleatoric[0][0],
                1e-12 * pred.aleatoric[0][0],
            );
        }
    }

    #[test]
    fn unc_reg_multi_values() {
        // ||y - mu0|| = 1, p_nu = -3 gives 3.
        let raw = raw2([0.0, 0.0, 0.0, 0.0, 0.0, -3.0]);
        assert_close(unc_reg_multi(&raw, &[1.0, 0.0]).unwrap(), 3.0, 1e-15);
        // Zero error: zero penalty.
        assert_close(unc_reg_multi(&raw, &[0.0, 0.0]).unwrap(), 0.0, 0.0);
        // p_nu = 0: zero penalty.
        let raw = raw2([0.0; 6]);
        assert_close(unc_reg_multi(&raw, &[1.0, 2.0]).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn unc_reg_multi_stable_matches_naive() {
        // Literal form: -(1/2)||e|| ln((n^2+3n)/(n^2+4n+1-nu) - 1).
        for i in 0..=160 {
            let p_nu = -8.0 + 16.0 * i as f64 / 160.0;
            let raw = raw2([0.0, 0.0, 0.0, 0.0, 0.0, p_nu]);
            let params = transform_multi(&raw).unwrap();
            let y = [0.6, -0.8];
            let norm = (0.6f64 * 0.6 + 0.8 * 0.8).sqrt();
            let naive = -0.5 * norm * (10.0 / (13.0 - params.nu) - 1.0).ln();
            let stable = unc_reg_multi(&raw, &y).unwrap();
            assert!(
                (stable - naive).abs() <= 1e-9 * stable.abs().max(naive.abs()).max(1e-9),
                "p_nu {p_nu}: stable {stable}, naive {naive}"
            );
        }
    }

    #[test]
    fn standalone_escape_gradient_is_bit_exact() {
        for &p_nu in &[-1e6, -12.0, 0.0, 12.0, 1e6] {
            let raw = raw2([0.3, -0.4, 0.0, 0.0, 0.0, p_nu]);
            let y = [1.3, 0.1];
            let g = unc_grad_p_nu(&raw, &y).unwrap();
            // Exact identity: zero ulps at every saturation depth.
            assert_eq!(g, -(1.0f64 + 0.25).sqrt());
        }
    }

    /// Central differences over all raw channels of
    /// `mern_nll + lambda1 * unc_reg_multi`.
    fn fd_grad(raw: &RawHeadM, y: &[f64], lambda1: f64, r: f64, h: f64) -> Vec<f64> {
        let f = |p: &[f64]| {
            let probe = RawHeadM::new(raw.n, p.to_vec()).unwrap();
            let params = transform_multi(&probe).unwrap();
            mern_nll(&params, y, r).unwrap() + lambda1 * unc_reg_multi(&probe, y).unwrap()
        };
        let base = raw.values().to_vec();
        (0..base.len())
            .map(|i| {
                let mut plus = base.clone();
                plus[i] += h;
                let mut minus = base.clone();
                minus[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn grad_multi_matches_finite_differences() {
        let mut rng = Rng::new(314);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let p: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let raw = RawHeadM::new(2, p).unwrap();
            let y = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            if ((y[0] - raw.values()[0]).powi(2) + (y[1] - raw.values()[1]).powi(2)).sqrt() < 0.1
            {
                continue;
            }
            // detach = false makes the full objective the finite-difference
            // target for every channel.
            let g = grad_multi(&raw, &y, 0.3, 1.0, false).unwrap();
            let fd = fd_grad(&raw, &y, 0.3, 1.0, 1e-5);
            for (a, f) in g.iter().zip(&fd) {
                worst = worst.max(rel_err(*a, *f));
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn grad_multi_matches_finite_differences_without_escape() {
        // Probe ranges keep L L^T well-conditioned: a tiny diagonal against
        // large off-diagonal entries makes the log-determinant's higher
        // derivatives explode and drowns central differences in truncation
        // error. The closed form itself is exact everywhere.
        let mut rng = Rng::new(2718);
        let mut worst = 0.0f64;
        for n in [2usize, 3] {
            let len = RawHeadM::expected_len(n);
            for _ in 0..100 {
                let p: Vec<f64> = (0..len)
                    .map(|i| {
                        if (n..2 * n).contains(&i) {
                            rng.uniform(-0.5, 0.75)
                        } else if i + 1 < len && i >= 2 * n {
                            rng.uniform(-1.0, 1.0)
                        } else {
                            rng.uniform(-2.0, 2.0)
                        }
                    })
                    .collect();
                let raw = RawHeadM::new(n, p).unwrap();
                let y: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
                let g = grad_multi(&raw, &y, 0.0, 1.0, true).unwrap();
                let fd = fd_grad(&raw, &y, 0.0, 1.0, 1e-5);
                for (a, f) in g.iter().zip(&fd) {
                    worst = worst.max(rel_err(*a, *f));
                }
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn saturated_p_nu_channel_has_vanishing_nll_gradient() {
        // The tanh chain factor freezes the nu channel deep in saturation.
        let mut rng = Rng::new(99);
        for _ in 0..500 {
            let p_nu = rng.uniform(-20.0, -12.0);
            let p = vec![
                rng.uniform(-2.0, 2.0),
                rng.uniform(-2.0, 2.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
                p_nu,
            ];
            let raw = RawHeadM::new(2, p).unwrap();
            let y = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let g = grad_multi(&raw, &y, 0.0, 1.0, true).unwrap();
            assert!(
                g[5].abs() <= 1e-8,
                "p_nu {p_nu}: gradient {} should vanish",
                g[5]
            );
        }
    }

    #[test]
    fn escape_gradient_on_p_nu_is_exactly_negative_error_norm() {
        // Differencing two lambda1 settings isolates the escape channel; the
        // result must equal -||y - mu0|| exactly even at p_nu = -1e6.
        let mut rng = Rng::new(55);
        for &p_nu in &[-1e6, -20.0, -3.0, 0.0, 3.0] {
            for _ in 0..20 {
                let p = vec![
                    rng.uniform(-2.0, 2.0),
                    rng.uniform(-2.0, 2.0),
                    rng.uniform(-1.0, 1.0),
                    rng.uniform(-1.0, 1.0),
                    rng.uniform(-1.0, 1.0),
                    p_nu,
                ];
                let raw = RawHeadM::new(2, p).unwrap();
                let y = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let norm = error_norm(&raw, &y);
                let g1 = grad_multi(&raw, &y, 1.0, 1.0, true).unwrap();
                let g2 = grad_multi(&raw, &y, 2.0, 1.0, true).unwrap();
                let isolated = g2[5] - g1[5];
                let scale = g1[5].abs().max(norm);
                assert!(
                    (isolated + norm).abs() <= 4.0 * scale * f64::EPSILON,
                    "p_nu {p_nu}: isolated {isolated}, expected {}",
                    -norm
                );
            }
        }
    }

    #[test]
    fn cholesky_detects_non_spd() {
        let not_spd = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&not_spd, 2).is_err());
        let spd = vec![2.0, 0.3, 0.3, 1.0];
        let l = cholesky(&spd, 2).unwrap();
        // L L^T reproduces the input.
        assert_close(l[0] * l[0], 2.0, 1e-12);
        assert_close(l[2] * l[0], 0.3, 1e-12);
        assert_close(l[2] * l[2] + l[3] * l[3], 1.0, 1e-12);
        // Solve against a known right-hand side.
        let x = chol_solve(&l, 2, &[1.0, 2.0]);
        assert_close(2.0 * x[0] + 0.3 * x[1], 1.0, 1e-12);
        assert_close(0.3 * x[0] + 1.0 * x[1], 2.0, 1e-12);
    }
}
