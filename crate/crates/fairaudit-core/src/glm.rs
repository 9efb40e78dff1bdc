//! Weighted GLM core: weighted least squares and IRLS logistic regression
//! with model-based and HC0 sandwich covariance.
//!
//! Solves run through a column-pivoted QR of the sqrt-weighted design; rank
//! is decided by a relative pivot threshold of 1e-10. The sandwich estimator
//! is `(X'WX)^-1 (sum_i w_i^2 e_i^2 x_i x_i') (X'WX)^-1` with response
//! residuals for the linear family and score residuals for the logistic one.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Relative pivot threshold for rank decisions.
const RANK_TOL: f64 = 1e-10;
/// IRLS stops when the relative deviance change drops below this.
const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITER: usize = 100;
/// Coefficient max-norm beyond which IRLS is declared separated.
const SEPARATION_BOUND: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Model,
    Sandwich,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectScale {
    Difference,
    LogOddsRatio,
}

/// Point estimate with its Wald test at level `alpha`.
#[derive(Debug, Clone, Serialize)]
pub struct EffectEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
    pub scale: EffectScale,
}

/// A fitted weighted linear or logistic model.
#[derive(Debug, Clone)]
pub struct FittedGlm {
    pub family: GlmFamily,
    /// Intercept first, then the remaining design columns in order.
    pub coefficients: DVector<f64>,
    pub covariance_model: DMatrix<f64>,
    pub covariance_sandwich: DMatrix<f64>,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub weights_used: DVector<f64>,
    /// Fitted means: probabilities for logistic, X*b for linear.
    pub fitted: DVector<f64>,
    /// Unscaled `(X'WX)^-1` at the solution (the sandwich "bread").
    pub bread: DMatrix<f64>,
    /// Per-coefficient numerical-uncertainty floor for standard errors.
    ///
    /// When the outcome is an exact linear function of the design, residuals
    /// are rounding noise and the usual variance estimates land below the
    /// forward-error bound of the solve itself; a Wald test there would be
    /// comparing one rounding artifact against another. Standard errors are
    /// therefore floored at `eps * ||sqrt(W) y|| * sqrt((X'WX)^-1_jj)`.
    pub se_floor: DVector<f64>,
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.cdf(x)
}

fn check_inputs(design: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<()> {
    let n = design.nrows();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidConfig(format!(
            "design has {n} rows but y has {} and w has {}",
            y.len(),
            w.len()
        )));
    }
    if design.ncols() == 0 || n == 0 {
        return Err(Error::InvalidConfig("empty design matrix".into()));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if !w.iter().any(|v| *v > 0.0) {
        return Err(Error::InvalidConfig("all weights are zero".into()));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Weighted least-squares solve via column-pivoted QR.
/// Returns the coefficients and the unscaled `(X'WX)^-1`.
fn wls_solve(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = design.nrows();
    let p = design.ncols();
    let mut xw = design.clone_owned();
    let mut yw = DVector::zeros(n);
    for i in 0..n {
        let s = w[i].sqrt();
        for j in 0..p {
            xw[(i, j)] *= s;
        }
        yw[i] = y[i] * s;
    }

    let qr = xw.clone().col_piv_qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    let tol = RANK_TOL * r00;
    let rank = (0..p.min(n))
        .take_while(|&k| r[(k, k)].abs() > tol && r[(k, k)] != 0.0)
        .count();
    if rank < p {
        let mut idx = DMatrix::<f64>::from_fn(1, p, |_, j| j as f64);
        qr.p().permute_columns(&mut idx);
        let columns: Vec<usize> = (rank..p).map(|k| idx[(0, k)] as usize).collect();
        return Err(Error::SingularDesign { columns });
    }

    let qtb = qr.q().tr_mul(&yw);
    let z = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::SingularDesign { columns: vec![] })?;
    let mut idx = DMatrix::<f64>::from_fn(1, p, |_, j| j as f64);
    qr.p().permute_columns(&mut idx);
    let mut coef = DVector::zeros(p);
    for k in 0..p {
        coef[idx[(0, k)] as usize] = z[k];
    }

    let xtwx = symmetrize(xw.tr_mul(&xw));
    let chol = Cholesky::new(xtwx).ok_or(Error::SingularDesign { columns: vec![] })?;
    let bread = chol.inverse();
    Ok((coef, bread))
}

fn sandwich(bread: &DMatrix<f64>, design: &DMatrix<f64>, score: &DVector<f64>) -> DMatrix<f64> {
    let p = design.ncols();
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..design.nrows() {
        let s = score[i];
        if s == 0.0 {
            continue;
        }
        let s2 = s * s;
        for a in 0..p {
            let xa = design[(i, a)];
            if xa == 0.0 {
                continue;
            }
            for b in 0..p {
                meat[(a, b)] += s2 * xa * design[(i, b)];
            }
        }
    }
    symmetrize(bread * meat * bread)
}

/// Fit a weighted linear regression minimizing `sum_i w_i (y_i - x_i'b)^2`.
pub fn fit_linear_weighted(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<FittedGlm> {
    check_inputs(design, y, w)?;
    let n = design.nrows();
    let p = design.ncols();
    let (coef, bread) = wls_solve(design, y, w)?;

    let fitted = design * &coef;
    let n_used = w.iter().filter(|v| **v > 0.0).count();
    let mut rss = 0.0;
    let mut score = DVector::zeros(n);
    let mut ynorm2 = 0.0;
    for i in 0..n {
        let e = y[i] - fitted[i];
        rss += w[i] * e * e;
        score[i] = w[i] * e;
        ynorm2 += w[i] * y[i] * y[i];
    }
    let df = n_used.saturating_sub(p).max(1) as f64;
    let sigma2 = rss / df;
    let covariance_model = symmetrize(&bread * sigma2);
    let covariance_sandwich = sandwich(&bread, design, &score);
    let yw_norm = ynorm2.sqrt();
    let se_floor = DVector::from_fn(p, |j, _| f64::EPSILON * yw_norm * bread[(j, j)].max(0.0).sqrt());

    Ok(FittedGlm {
        family: GlmFamily::Linear,
        coefficients: coef,
        covariance_model,
        covariance_sandwich,
        n_obs: n_used,
        converged: true,
        iterations: 1,
        weights_used: w.clone_owned(),
        fitted,
        bread,
        se_floor,
    })
}

fn weighted_deviance(y: &DVector<f64>, mu: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut dev = 0.0;
    for i in 0..y.len() {
        let m = mu[i].clamp(1e-10, 1.0 - 1e-10);
        dev += w[i] * (y[i] * m.ln() + (1.0 - y[i]) * (1.0 - m).ln());
    }
    -2.0 * dev
}

/// Fit a weighted logistic regression by IRLS, maximizing the weighted
/// Bernoulli log-likelihood.
pub fn fit_logistic_weighted(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<FittedGlm> {
    check_inputs(design, y, w)?;
    let n = design.nrows();
    let p = design.ncols();
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidConfig("logistic outcome must be 0/1".into()));
    }
    let w1: f64 = (0..n).map(|i| if y[i] == 1.0 { w[i] } else { 0.0 }).sum();
    let w0: f64 = (0..n).map(|i| if y[i] == 0.0 { w[i] } else { 0.0 }).sum();
    if w1 <= 0.0 || w0 <= 0.0 {
        return Err(Error::DegenerateDataset(
            "logistic fit needs positive total weight in both outcome classes".into(),
        ));
    }

    let mut coef = DVector::zeros(p);
    let mut mu = DVector::from_element(n, 0.5);
    let mut deviance = weighted_deviance(y, &mu, w);
    let mut converged = false;
    let mut iterations = 0;
    let mut bread = DMatrix::zeros(p, p);

    for iter in 1..=IRLS_MAX_ITER {
        iterations = iter;
        let eta = design * &coef;
        let mut z = DVector::zeros(n);
        let mut ww = DVector::zeros(n);
        for i in 0..n {
            let m = expit(eta[i]);
            let v = (m * (1.0 - m)).max(1e-10);
            z[i] = eta[i] + (y[i] - m) / v;
            ww[i] = w[i] * v;
        }
        let (new_coef, new_bread) = wls_solve(design, &z, &ww)?;
        if new_coef.amax() > SEPARATION_BOUND {
            return Err(Error::SeparationDetected);
        }
        coef = new_coef;
        bread = new_bread;
        let eta = design * &coef;
        for i in 0..n {
            mu[i] = expit(eta[i]);
        }
        let new_deviance = weighted_deviance(y, &mu, w);
        let rel = (deviance - new_deviance).abs() / deviance.abs().max(1e-10);
        deviance = new_deviance;
        if rel < IRLS_TOL {
            converged = true;
            break;
        }
    }

    let covariance_model = symmetrize(bread.clone());
    let mut score = DVector::zeros(n);
    for i in 0..n {
        score[i] = w[i] * (y[i] - mu[i]);
    }
    let covariance_sandwich = sandwich(&bread, design, &score);
    let n_used = w.iter().filter(|v| **v > 0.0).count();

    Ok(FittedGlm {
        family: GlmFamily::Logistic,
        coefficients: coef,
        covariance_model,
        covariance_sandwich,
        n_obs: n_used,
        converged,
        iterations,
        weights_used: w.clone_owned(),
        fitted: mu,
        bread,
        // logistic fits never reach the exact-fit regime (separation is
        // caught first), so no numerical floor applies
        se_floor: DVector::zeros(p),
    })
}

/// Two-sided Wald test for one coefficient.
pub fn wald_test(
    fit: &FittedGlm,
    coef_index: usize,
    alpha: f64,
    covariance: CovarianceKind,
) -> Result<EffectEstimate> {
    if coef_index >= fit.coefficients.len() {
        return Err(Error::InvalidConfig(format!(
            "coefficient index {coef_index} out of range"
        )));
    }
    let cov = match covariance {
        CovarianceKind::Model => &fit.covariance_model,
        CovarianceKind::Sandwich => &fit.covariance_sandwich,
    };
    let var = cov[(coef_index, coef_index)];
    if !var.is_finite() || var <= 0.0 {
        return Err(Error::NumericalCovarianceFailure { index: coef_index });
    }
    let estimate = fit.coefficients[coef_index];
    let std_error = var.sqrt().max(fit.se_floor[coef_index]);
    let z_value = estimate / std_error;
    let p_value = (2.0 * (1.0 - standard_normal_cdf(z_value.abs()))).clamp(0.0, 1.0);
    Ok(EffectEstimate {
        estimate,
        std_error,
        z_value,
        p_value,
        alpha,
        significant: p_value < alpha,
        scale: match fit.family {
            GlmFamily::Linear => EffectScale::Difference,
            GlmFamily::Logistic => EffectScale::LogOddsRatio,
        },
    })
}

/// Gradient of the weighted Bernoulli log-likelihood at `coef`.
/// Exposed for convergence checks: `X' (w .* (y - mu))`.
pub fn logistic_gradient(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    coef: &DVector<f64>,
) -> DVector<f64> {
    let eta = design * coef;
    let mut s = DVector::zeros(design.nrows());
    for i in 0..design.nrows() {
        s[i] = w[i] * (y[i] - expit(eta[i]));
    }
    design.tr_mul(&s)
}

/// Weighted Bernoulli log-likelihood (used by tests for finite differences).
pub fn logistic_loglik(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    coef: &DVector<f64>,
) -> f64 {
    let eta = design * coef;
    let mut ll = 0.0;
    for i in 0..design.nrows() {
        let m = expit(eta[i]).clamp(1e-12, 1.0 - 1e-12);
        ll += w[i] * (y[i] * m.ln() + (1.0 - y[i]) * (1.0 - m).ln());
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design_from_cols(cols: &[&[f64]]) -> DMatrix<f64> {
        let n = cols[0].len();
        DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
    }

    #[test]
    fn exact_fit_recovers_slope() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = DVector::from_vec(x.iter().map(|v| 2.0 * v).collect());
        let ones = [1.0; 4];
        let design = design_from_cols(&[&ones, &x]);
        let w = DVector::from_element(4, 1.0);
        let fit = fit_linear_weighted(&design, &y, &w).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        let residual_max = (0..4)
            .map(|i| (y[i] - fit.fitted[i]).abs())
            .fold(0.0, f64::max);
        assert!(residual_max < 1e-12);
    }

    #[test]
    fn weight_scaling_does_not_change_coefficients() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let ones = [1.0; 4];
        let design = design_from_cols(&[&ones, &x]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]);
        let w = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.5]);
        let fit_a = fit_linear_weighted(&design, &y, &w).unwrap();
        let fit_b = fit_linear_weighted(&design, &y, &(w * 7.5)).unwrap();
        assert!((fit_a.coefficients[0] - fit_b.coefficients[0]).abs() < 1e-12);
        assert!((fit_a.coefficients[1] - fit_b.coefficients[1]).abs() < 1e-12);
    }

    #[test]
    fn simple_regression_closed_form() {
        // oracle: slope = Sxy/Sxx, intercept = ybar - slope*xbar
        let x = [0.0, 1.0, 2.0, 3.0];
        let yv = [1.0, 2.0, 3.0, 5.0];
        let xbar = 1.5;
        let ybar = 2.75;
        let sxx: f64 = x.iter().map(|v| (v - xbar) * (v - xbar)).sum();
        let sxy: f64 = x.iter().zip(&yv).map(|(a, b)| (a - xbar) * (b - ybar)).sum();
        let slope = sxy / sxx;
        let intercept = ybar - slope * xbar;
        assert!((slope - 1.3).abs() < 1e-12);
        assert!((intercept - 0.8).abs() < 1e-12);

        let ones = [1.0; 4];
        let design = design_from_cols(&[&ones, &x]);
        let y = DVector::from_vec(yv.to_vec());
        let w = DVector::from_element(4, 1.0);
        let fit = fit_linear_weighted(&design, &y, &w).unwrap();
        assert!((fit.coefficients[0] - 0.8).abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.3).abs() < 1e-10);
    }

    #[test]
    fn singular_design_reports_offending_columns() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let ones = [1.0; 4];
        let design = design_from_cols(&[&ones, &x, &x]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let w = DVector::from_element(4, 1.0);
        match fit_linear_weighted(&design, &y, &w) {
            Err(Error::SingularDesign { columns }) => {
                assert!(!columns.is_empty());
                assert!(columns.iter().all(|c| *c == 1 || *c == 2));
            }
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn intercept_only_logistic_matches_logit_of_mean() {
        let design = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        let w = DVector::from_element(4, 1.0);
        let fit = fit_logistic_weighted(&design, &y, &w).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-10);
    }

    /// Independent Newton maximizer for a 2-parameter logistic model.
    fn newton_logistic_2(design: &DMatrix<f64>, y: &DVector<f64>) -> (f64, f64) {
        let mut b = [0.0f64, 0.0];
        for _ in 0..60 {
            let mut g = [0.0f64, 0.0];
            let mut h = [[0.0f64; 2]; 2];
            for i in 0..design.nrows() {
                let xi = [design[(i, 0)], design[(i, 1)]];
                let m = expit(b[0] * xi[0] + b[1] * xi[1]);
                let v = m * (1.0 - m);
                for a in 0..2 {
                    g[a] += (y[i] - m) * xi[a];
                    for c in 0..2 {
                        h[a][c] += v * xi[a] * xi[c];
                    }
                }
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let db = [
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ];
            b[0] += db[0];
            b[1] += db[1];
        }
        (b[0], b[1])
    }

    #[test]
    fn saturated_two_by_two_logistic() {
        // x=1: 3 of 4 with y=1; x=0: 1 of 4 with y=1.
        let x = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let yv = [1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let ones = [1.0; 8];
        let design = design_from_cols(&[&ones, &x]);
        let y = DVector::from_vec(yv.to_vec());
        let w = DVector::from_element(8, 1.0);
        let fit = fit_logistic_weighted(&design, &y, &w).unwrap();
        assert!((fit.coefficients[1] - 9.0f64.ln()).abs() < 1e-8);
        assert!((fit.coefficients[0] - (1.0f64 / 3.0).ln()).abs() < 1e-8);
        // independent numerical maximizer agrees
        let (b0, b1) = newton_logistic_2(&design, &y);
        assert!((fit.coefficients[0] - b0).abs() < 1e-8);
        assert!((fit.coefficients[1] - b1).abs() < 1e-8);
    }

    #[test]
    fn row_duplication_equals_weight_two() {
        let x = [0.5, 1.5, -0.3, 2.0, -1.0];
        let yv = [1.0, 1.0, 0.0, 1.0, 0.0];
        let ones5 = [1.0; 5];
        let design = design_from_cols(&[&ones5, &x]);
        let y = DVector::from_vec(yv.to_vec());
        let w2 = DVector::from_element(5, 2.0);
        let fit_weighted = fit_logistic_weighted(&design, &y, &w2).unwrap();

        let x_dup: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let y_dup: Vec<f64> = yv.iter().chain(yv.iter()).copied().collect();
        let ones10 = [1.0; 10];
        let design_dup = design_from_cols(&[&ones10, &x_dup]);
        let fit_dup = fit_logistic_weighted(
            &design_dup,
            &DVector::from_vec(y_dup),
            &DVector::from_element(10, 1.0),
        )
        .unwrap();
        assert!((fit_weighted.coefficients[0] - fit_dup.coefficients[0]).abs() < 1e-10);
        assert!((fit_weighted.coefficients[1] - fit_dup.coefficients[1]).abs() < 1e-10);
    }

    #[test]
    fn complete_separation_detected() {
        // the separating direction needs a coefficient beyond the bound, so
        // keep the feature scale small
        let x = [-0.02, -0.01, 0.01, 0.02];
        let yv = [0.0, 0.0, 1.0, 1.0];
        let ones = [1.0; 4];
        let design = design_from_cols(&[&ones, &x]);
        let y = DVector::from_vec(yv.to_vec());
        let w = DVector::from_element(4, 1.0);
        assert!(matches!(
            fit_logistic_weighted(&design, &y, &w),
            Err(Error::SeparationDetected)
        ));
    }

    #[test]
    fn wald_zero_estimate_gives_p_one() {
        let mut fit = dummy_fit();
        fit.coefficients[1] = 0.0;
        let e = wald_test(&fit, 1, 0.05, CovarianceKind::Sandwich).unwrap();
        assert_eq!(e.p_value, 1.0);
        assert!(!e.significant);
        assert_eq!(e.z_value, 0.0);
    }

    #[test]
    fn wald_boundary_at_1p96() {
        let mut fit = dummy_fit();
        fit.coefficients[1] = 1.96;
        let e = wald_test(&fit, 1, 0.05, CovarianceKind::Sandwich).unwrap();
        assert!((e.p_value - 0.05).abs() < 1e-3);
    }

    #[test]
    fn wald_matches_reported_adult_face_p() {
        let mut fit = dummy_fit();
        fit.coefficients[1] = -1.069;
        let se = 0.3614;
        fit.covariance_sandwich[(1, 1)] = se * se;
        let e = wald_test(&fit, 1, 0.05, CovarianceKind::Sandwich).unwrap();
        assert!((e.p_value - 0.003).abs() < 2e-4);
        assert!(e.significant);
    }

    #[test]
    fn wald_rejects_nonpositive_variance() {
        let mut fit = dummy_fit();
        fit.covariance_sandwich[(1, 1)] = 0.0;
        assert!(matches!(
            wald_test(&fit, 1, 0.05, CovarianceKind::Sandwich),
            Err(Error::NumericalCovarianceFailure { index: 1 })
        ));
    }

    fn dummy_fit() -> FittedGlm {
        FittedGlm {
            family: GlmFamily::Logistic,
            coefficients: DVector::from_vec(vec![0.1, 0.5]),
            covariance_model: DMatrix::identity(2, 2),
            covariance_sandwich: DMatrix::identity(2, 2),
            n_obs: 10,
            converged: true,
            iterations: 3,
            weights_used: DVector::from_element(10, 1.0),
            fitted: DVector::from_element(10, 0.5),
            bread: DMatrix::identity(2, 2),
            se_floor: DVector::zeros(2),
        }
    }

    fn random_logistic_instance(
        seed: u64,
        n: usize,
        p: usize,
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = DMatrix::from_fn(n, p, |_, c| {
            if c == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let truth = DVector::from_fn(p, |i, _| if i == 0 { -0.2 } else { 0.5 });
        let y = DVector::from_fn(n, |i, _| {
            let eta: f64 = (0..p).map(|j| design[(i, j)] * truth[j]).sum();
            f64::from(u8::from(rng.random::<f64>() < expit(eta)))
        });
        let w = DVector::from_fn(n, |_, _| 0.5 + rng.random::<f64>());
        (design, y, w)
    }

    #[test]
    fn irls_gradient_vanishes_and_matches_finite_differences() {
        for seed in 0..5u64 {
            let (design, y, w) = random_logistic_instance(seed, 400, 4);
            let fit = fit_logistic_weighted(&design, &y, &w).unwrap();
            assert!(fit.converged);
            let grad = logistic_gradient(&design, &y, &w, &fit.coefficients);
            assert!(grad.amax() < 1e-6, "gradient too large: {}", grad.amax());

            // central finite differences on the log-likelihood
            let h = 1e-5;
            for j in 0..4 {
                let mut up = fit.coefficients.clone();
                let mut dn = fit.coefficients.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (logistic_loglik(&design, &y, &w, &up)
                    - logistic_loglik(&design, &y, &w, &dn))
                    / (2.0 * h);
                let denom = grad[j].abs().max(1e-3);
                assert!(
                    (fd - grad[j]).abs() / denom < 1e-4,
                    "finite difference mismatch at {j}: fd={fd}, grad={}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn model_and_sandwich_agree_when_well_specified() {
        let (design, y, _) = random_logistic_instance(42, 10_000, 3);
        let w = DVector::from_element(10_000, 1.0);
        let fit = fit_logistic_weighted(&design, &y, &w).unwrap();
        let diff = &fit.covariance_sandwich - &fit.covariance_model;
        let rel = diff.norm() / fit.covariance_model.norm();
        assert!(rel < 0.15, "relative Frobenius error {rel}");
    }

    #[test]
    fn fitted_probabilities_invariant_to_affine_feature_transform() {
        let (design, y, w) = random_logistic_instance(7, 500, 3);
        let fit_a = fit_logistic_weighted(&design, &y, &w).unwrap();
        let mut transformed = design.clone();
        for i in 0..transformed.nrows() {
            transformed[(i, 1)] = (transformed[(i, 1)] - 3.5) / 0.25;
            transformed[(i, 2)] = transformed[(i, 2)] * 40.0 + 2.0;
        }
        let fit_b = fit_logistic_weighted(&transformed, &y, &w).unwrap();
        let max_diff = (0..500)
            .map(|i| (fit_a.fitted[i] - fit_b.fitted[i]).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-8, "fitted probabilities moved by {max_diff}");
    }

    #[test]
    fn manual_irls_oracle_matches_logistic_fit() {
        // Drive WLS on hand-built working responses until convergence; the
        // logistic fit must land on the same coefficients.
        let (design, y, w) = random_logistic_instance(11, 300, 3);
        let mut coef = DVector::zeros(3);
        for _ in 0..50 {
            let eta = &design * &coef;
            let mut z = DVector::zeros(300);
            let mut ww = DVector::zeros(300);
            for i in 0..300 {
                let m = expit(eta[i]);
                let v = (m * (1.0 - m)).max(1e-10);
                z[i] = eta[i] + (y[i] - m) / v;
                ww[i] = w[i] * v;
            }
            let step = fit_linear_weighted(&design, &z, &ww).unwrap();
            coef = step.coefficients;
        }
        let fit = fit_logistic_weighted(&design, &y, &w).unwrap();
        for j in 0..3 {
            assert!((coef[j] - fit.coefficients[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn covariances_are_symmetric_with_nonnegative_diagonal() {
        let (design, y, w) = random_logistic_instance(3, 200, 3);
        let fit = fit_logistic_weighted(&design, &y, &w).unwrap();
        for cov in [&fit.covariance_model, &fit.covariance_sandwich] {
            for a in 0..3 {
                assert!(cov[(a, a)] >= 0.0);
                for b in 0..3 {
                    assert!((cov[(a, b)] - cov[(b, a)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn logit_expit_round_trip() {
        for &p in &[1e-6, 1e-3, 0.25, 0.5, 0.75, 1.0 - 1e-3, 1.0 - 1e-6] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
    }
}
