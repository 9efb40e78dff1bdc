//! FACE: average causal effect of the protected attribute over the whole
//! population, estimated on the stabilized-weight pseudo-population.
//!
//! The outcome model keeps the covariates alongside the treatment indicator,
//! so the estimate is doubly robust: it is consistent when either the weight
//! model or the outcome model is correctly specified.

use nalgebra::DVector;
use serde::Serialize;

use crate::dataset::{Dataset, GroupLabels};
use crate::error::Result;
use crate::glm::{
    fit_linear_weighted, fit_logistic_weighted, wald_test, CovarianceKind, EffectEstimate,
    EffectScale,
};
use crate::propensity::PropensityResult;

/// Index of the treatment coefficient in the `[1 | A | X]` design.
pub const TREATMENT_COEF: usize = 1;

/// Weighted outcome regression on the pseudo-population; the treatment
/// coefficient is the FACE estimate. Sandwich covariance throughout, since
/// weighting induces heteroskedasticity.
pub fn estimate_face(d: &Dataset, p: &PropensityResult, alpha: f64) -> Result<EffectEstimate> {
    let design = d.design_with_treatment()?;
    let outcome = d.outcome()?;
    let y = DVector::from_column_slice(outcome);
    let w = DVector::from_column_slice(&p.stabilized_weight);
    let fit = if d.encoded()?.outcome_is_binary {
        fit_logistic_weighted(&design, &y, &w)?
    } else {
        fit_linear_weighted(&design, &y, &w)?
    };
    wald_test(&fit, TREATMENT_COEF, alpha, CovarianceKind::Sandwich)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// No significant average effect was found.
    FairOnAverage,
    /// The treated group's expected outcome is significantly higher.
    HigherForTreated,
    /// The treated group's expected outcome is significantly lower.
    LowerForTreated,
}

#[derive(Debug, Clone, Serialize)]
pub struct FaceSummary {
    pub verdict: Verdict,
    /// exp(estimate) when the estimate is a log odds ratio.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds_multiplier: Option<f64>,
    pub text: String,
}

fn verdict_for(e: &EffectEstimate) -> Verdict {
    if !e.significant {
        Verdict::FairOnAverage
    } else if e.estimate > 0.0 {
        Verdict::HigherForTreated
    } else {
        Verdict::LowerForTreated
    }
}

/// Human-readable reading of a FACE estimate.
pub fn interpret_face(e: &EffectEstimate, labels: &GroupLabels) -> FaceSummary {
    let verdict = verdict_for(e);
    match e.scale {
        EffectScale::LogOddsRatio => {
            let mult = e.estimate.exp();
            let text = match verdict {
                Verdict::FairOnAverage => format!(
                    "fair on average (FACE): no significant effect of `{}` vs `{}` \
                     (p = {:.3} at alpha = {})",
                    labels.treated, labels.control, e.p_value, e.alpha
                ),
                _ => format!(
                    "on average over the population, odds of the positive outcome for \
                     `{}` are {:.2} times those of `{}` (p = {:.3})",
                    labels.treated, mult, labels.control, e.p_value
                ),
            };
            FaceSummary {
                verdict,
                odds_multiplier: Some(mult),
                text,
            }
        }
        EffectScale::Difference => {
            let text = match verdict {
                Verdict::FairOnAverage => format!(
                    "fair on average (FACE): no significant effect of `{}` vs `{}` \
                     (p = {:.3} at alpha = {})",
                    labels.treated, labels.control, e.p_value, e.alpha
                ),
                _ => format!(
                    "on average over the population, the outcome for `{}` differs from \
                     `{}` by {:.4} outcome units (p = {:.3})",
                    labels.treated, labels.control, e.estimate, e.p_value
                ),
            };
            FaceSummary {
                verdict,
                odds_multiplier: None,
                text,
            }
        }
    }
}
