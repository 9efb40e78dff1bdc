//! FACT: average causal effect of the protected attribute on the treated
//! group, estimated by weighted outcome regression on the matched sample.
//!
//! The covariates stay in the post-match outcome model, so the estimate is
//! doubly robust: correct matching or a correct outcome model suffices.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::{Dataset, GroupLabels};
use crate::error::{Error, Result};
use crate::face::{Verdict, TREATMENT_COEF};
use crate::glm::{
    fit_linear_weighted, fit_logistic_weighted, standard_normal_cdf, wald_test, CovarianceKind,
    EffectEstimate, EffectScale, FittedGlm,
};
use crate::matching::MatchResult;

/// Weighted outcome regression of Y on `[1 | A | X]` over matched rows with
/// match weights; the treatment coefficient estimates FACT. Sandwich
/// covariance by default.
pub fn estimate_fact(d: &Dataset, m: &MatchResult, alpha: f64) -> Result<EffectEstimate> {
    let (fit, _, _) = fit_matched_outcome(d, m)?;
    wald_test(&fit, TREATMENT_COEF, alpha, CovarianceKind::Sandwich)
}

/// Same regression with subclass-clustered (CR0) standard errors; rows in
/// the same full-matching subclass share one cluster. Falls back to the
/// sandwich when the match has no subclasses.
pub fn estimate_fact_clustered(d: &Dataset, m: &MatchResult, alpha: f64) -> Result<EffectEstimate> {
    if m.subclasses.is_empty() {
        return estimate_fact(d, m, alpha);
    }
    let (fit, rows, design) = fit_matched_outcome(d, m)?;
    let mut cluster_of = vec![usize::MAX; m.n_rows];
    for (s, sub) in m.subclasses.iter().enumerate() {
        for r in sub.rows() {
            cluster_of[r] = s;
        }
    }
    let p = design.ncols();
    let outcome = d.outcome()?;
    let mut scores = vec![DVector::<f64>::zeros(p); m.subclasses.len()];
    for (local, &row) in rows.iter().enumerate() {
        let cluster = cluster_of[row];
        if cluster == usize::MAX {
            continue;
        }
        let e = outcome[row] - fit.fitted[local];
        let w = fit.weights_used[local];
        for j in 0..p {
            scores[cluster][j] += w * e * design[(local, j)];
        }
    }
    let mut meat = DMatrix::zeros(p, p);
    for s in &scores {
        meat += s * s.transpose();
    }
    let cov = &fit.bread * meat * &fit.bread;
    let var = cov[(TREATMENT_COEF, TREATMENT_COEF)];
    if !var.is_finite() || var <= 0.0 {
        return Err(Error::NumericalCovarianceFailure {
            index: TREATMENT_COEF,
        });
    }
    let estimate = fit.coefficients[TREATMENT_COEF];
    let std_error = var.sqrt().max(fit.se_floor[TREATMENT_COEF]);
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
            crate::glm::GlmFamily::Linear => EffectScale::Difference,
            crate::glm::GlmFamily::Logistic => EffectScale::LogOddsRatio,
        },
    })
}

fn fit_matched_outcome(
    d: &Dataset,
    m: &MatchResult,
) -> Result<(FittedGlm, Vec<usize>, DMatrix<f64>)> {
    if d.n_rows() != m.n_rows {
        return Err(Error::InvalidConfig(format!(
            "match result has {} rows, dataset has {}",
            m.n_rows,
            d.n_rows()
        )));
    }
    if m.n_treated_matched == 0 || m.n_control_matched == 0 {
        return Err(Error::EmptyMatch);
    }
    let rows: Vec<usize> = (0..d.n_rows()).filter(|&i| m.match_weight[i] > 0.0).collect();
    let full_design = d.design_with_treatment()?;
    let outcome = d.outcome()?;
    let design = DMatrix::from_fn(rows.len(), full_design.ncols(), |r, c| {
        full_design[(rows[r], c)]
    });
    let y = DVector::from_fn(rows.len(), |r, _| outcome[rows[r]]);
    let w = DVector::from_fn(rows.len(), |r, _| m.match_weight[rows[r]]);
    let fit = if d.encoded()?.outcome_is_binary {
        fit_logistic_weighted(&design, &y, &w)?
    } else {
        fit_linear_weighted(&design, &y, &w)?
    };
    Ok((fit, rows, design))
}

#[derive(Debug, Clone, Serialize)]
pub struct FactSummary {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds_multiplier: Option<f64>,
    pub method: crate::matching::MatchMethod,
    pub n_treated_matched: usize,
    pub n_control_matched: usize,
    pub text: String,
}

/// Human-readable reading of a FACT estimate: the claim is restricted to the
/// treated group, compared with matched controls.
pub fn interpret_fact(e: &EffectEstimate, m: &MatchResult, labels: &GroupLabels) -> FactSummary {
    let verdict = if !e.significant {
        Verdict::FairOnAverage
    } else if e.estimate > 0.0 {
        Verdict::HigherForTreated
    } else {
        Verdict::LowerForTreated
    };
    let counts = format!(
        "{} treated matched to {} controls",
        m.n_treated_matched, m.n_control_matched
    );
    let (odds_multiplier, text) = match e.scale {
        EffectScale::LogOddsRatio => {
            let mult = e.estimate.exp();
            let text = match verdict {
                Verdict::FairOnAverage => format!(
                    "fair on average causal effect on the treated (FACT): for `{}` \
                     individuals and their matched `{}` counterparts, no significant \
                     outcome difference (p = {:.3}; {counts})",
                    labels.treated, labels.control, e.p_value
                ),
                _ => format!(
                    "for `{}` individuals, odds of the positive outcome are {:.2} times \
                     those of matched `{}` counterparts (p = {:.3}; {counts})",
                    labels.treated, mult, labels.control, e.p_value
                ),
            };
            (Some(mult), text)
        }
        EffectScale::Difference => {
            let text = match verdict {
                Verdict::FairOnAverage => format!(
                    "fair on average causal effect on the treated (FACT): for `{}` \
                     individuals and their matched `{}` counterparts, no significant \
                     outcome difference (p = {:.3}; {counts})",
                    labels.treated, labels.control, e.p_value
                ),
                _ => format!(
                    "for `{}` individuals, the outcome differs from matched `{}` \
                     counterparts by {:.4} units (p = {:.3}; {counts})",
                    labels.treated, labels.control, e.estimate, e.p_value
                ),
            };
            (None, text)
        }
    };
    FactSummary {
        verdict,
        odds_multiplier,
        method: m.config.method,
        n_treated_matched: m.n_treated_matched,
        n_control_matched: m.n_control_matched,
        text,
    }
}
