//! Causal group-fairness auditing for tabular data.
//!
//! Given observational records with a binary protected attribute and an
//! outcome, this crate estimates two causal fairness quantities:
//!
//! - **FACE** (fair on average causal effect): the average effect of the
//!   protected attribute on the outcome over the whole population, estimated
//!   by stabilized inverse-probability weighting followed by a weighted
//!   outcome regression ([`face::estimate_face`]).
//! - **FACT** (fair on average causal effect on the treated): the same
//!   contrast restricted to the protected group, estimated by matching
//!   treated to control rows ([`matching`]) and running the outcome
//!   regression on the matched sample ([`fact::estimate_fact`]).
//!
//! Supporting machinery: propensity estimation with stabilized weights
//! ([`propensity`]), five matching methods including optimal full matching
//! via min-cost flow, balance diagnostics with SVG plots ([`balance`]),
//! Rosenbaum-style sensitivity analysis against hidden confounding
//! ([`sensitivity`]), a synthetic benchmark generator ([`synthgen`]), and
//! JSON audit reports ([`report`]).

pub mod balance;
pub mod dataset;
pub mod error;
pub mod face;
pub mod fact;
pub mod glm;
pub mod matching;
pub mod propensity;
pub mod report;
pub mod sensitivity;
pub mod synthgen;

pub use error::{Error, Result};

/// Worker-count cap honored by the parallel match searches.
///
/// Reads `FAIRNESS_AUDIT_THREADS`; falls back to the machine parallelism.
pub fn worker_threads() -> usize {
    let avail = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("FAIRNESS_AUDIT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n.min(avail.max(1)),
            _ => avail,
        },
        Err(_) => avail,
    }
}
