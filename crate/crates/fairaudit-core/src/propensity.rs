//! Propensity estimation and stabilized inverse-probability weights.
//!
//! The propensity of treated-level membership Pr(A = a | X) is fit by
//! logistic regression on the encoded features. Each row gets a stabilized
//! weight: the marginal treated share over the conditional probability of
//! the row's own group, so the weighted sample behaves like a population in
//! which group membership is independent of the measured covariates.

use nalgebra::DVector;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_logistic_weighted, logit, FittedGlm};

/// Probabilities are clamped to this band before weights are formed so no
/// weight is infinite.
pub const PROBABILITY_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PropensityResult {
    /// Pr(A = treated | X) per row, clamped away from 0 and 1.
    pub probability: Vec<f64>,
    /// logit(probability): the linear score used as the matching distance.
    pub linear_score: Vec<f64>,
    /// Stabilized weight per row.
    pub stabilized_weight: Vec<f64>,
    /// Sample share of treated rows (the weight numerator).
    pub marginal_treated: f64,
    pub model: FittedGlm,
    /// Treated indicator copied from the dataset the fit ran on.
    pub protected: Vec<u8>,
}

impl PropensityResult {
    pub fn n_rows(&self) -> usize {
        self.probability.len()
    }

    /// Percentile-truncate the stabilized weights (e.g. 1.0/99.0). Changes
    /// the estimand; off unless explicitly requested.
    pub fn truncate_weights(&mut self, lower_pct: f64, upper_pct: f64) -> Result<()> {
        if !(0.0..=100.0).contains(&lower_pct)
            || !(0.0..=100.0).contains(&upper_pct)
            || lower_pct >= upper_pct
        {
            return Err(Error::InvalidConfig(format!(
                "invalid truncation percentiles ({lower_pct}, {upper_pct})"
            )));
        }
        let mut sorted = self.stabilized_weight.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        let lo = percentile(&sorted, lower_pct);
        let hi = percentile(&sorted, upper_pct);
        for w in &mut self.stabilized_weight {
            *w = w.clamp(lo, hi);
        }
        Ok(())
    }
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fit the propensity model and compute stabilized weights.
pub fn fit_propensity(d: &Dataset) -> Result<PropensityResult> {
    let design = d.design_with_intercept()?;
    let a = d.protected_indicator()?;
    let n = design.nrows();
    let y = DVector::from_fn(n, |i, _| f64::from(a[i]));
    let w = DVector::from_element(n, 1.0);

    let model = match fit_logistic_weighted(&design, &y, &w) {
        Ok(m) => m,
        Err(Error::SeparationDetected) => {
            return Err(Error::PositivityViolation(
                "propensity model separated: some rows are deterministically \
                 assignable to one protected level"
                    .into(),
            ))
        }
        Err(e) => return Err(e),
    };

    let marginal_treated = a.iter().map(|v| f64::from(*v)).sum::<f64>() / n as f64;
    let mut probability = Vec::with_capacity(n);
    let mut linear_score = Vec::with_capacity(n);
    let mut stabilized_weight = Vec::with_capacity(n);
    for i in 0..n {
        let p = model.fitted[i].clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
        probability.push(p);
        linear_score.push(logit(p));
        let sw = if a[i] == 1 {
            marginal_treated / p
        } else {
            (1.0 - marginal_treated) / (1.0 - p)
        };
        stabilized_weight.push(sw);
    }

    Ok(PropensityResult {
        probability,
        linear_score,
        stabilized_weight,
        marginal_treated,
        model,
        protected: a.to_vec(),
    })
}

/// Rows whose propensity sits within `epsilon` of 0 or 1.
pub fn positivity_report(p: &PropensityResult, epsilon: f64) -> Vec<usize> {
    p.probability
        .iter()
        .enumerate()
        .filter(|(_, pr)| **pr < epsilon || **pr > 1.0 - epsilon)
        .map(|(i, _)| i)
        .collect()
}
