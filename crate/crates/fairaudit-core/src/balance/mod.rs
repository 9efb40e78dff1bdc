//! Match-quality diagnostics: standardized mean differences on the distance
//! measure and per feature, weighted QQ data, and jitter-plot data.
//!
//! Balance is assessed descriptively only; no hypothesis tests are computed
//! here. Post-match statistics use match weights but keep the pre-match
//! group variances in the denominator so before/after values share a scale.

pub mod svg;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matching::MatchResult;
use crate::propensity::PropensityResult;

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    /// SMD of the linear propensity score before matching.
    pub d_bar_before: f64,
    /// SMD of the linear propensity score under match weights.
    pub d_bar_after: f64,
    pub per_feature_smd_before: BTreeMap<String, f64>,
    pub per_feature_smd_after: BTreeMap<String, f64>,
    pub n_matched_treated: usize,
    pub n_matched_control: usize,
}

/// |weighted treated mean - weighted control mean| divided by
/// sqrt((s_t^2 + s_c^2)/2), where the variances are always the unweighted
/// per-group variances so the scale is fixed across weightings.
pub fn standardized_mean_difference(
    values: &[f64],
    group: &[u8],
    weights: &[f64],
) -> Result<f64> {
    if values.len() != group.len() || values.len() != weights.len() {
        return Err(Error::InvalidConfig("length mismatch in SMD inputs".into()));
    }
    let mut wsum = [0.0f64; 2];
    let mut wtot = [0.0f64; 2];
    for i in 0..values.len() {
        let g = usize::from(group[i] == 1);
        wsum[g] += weights[i] * values[i];
        wtot[g] += weights[i];
    }
    if wtot[0] <= 0.0 || wtot[1] <= 0.0 {
        return Err(Error::DegenerateDataset(
            "a group has zero total weight in SMD".into(),
        ));
    }
    let denom = pooled_sd(values, group)?;
    Ok((wsum[1] / wtot[1] - wsum[0] / wtot[0]).abs() / denom)
}

fn pooled_sd(values: &[f64], group: &[u8]) -> Result<f64> {
    let mut sum = [0.0f64; 2];
    let mut count = [0usize; 2];
    for i in 0..values.len() {
        let g = usize::from(group[i] == 1);
        sum[g] += values[i];
        count[g] += 1;
    }
    let mut var = [0.0f64; 2];
    for g in 0..2 {
        if count[g] < 2 {
            continue;
        }
        let mean = sum[g] / count[g] as f64;
        let ss: f64 = values
            .iter()
            .zip(group)
            .filter(|(_, gr)| usize::from(**gr == 1) == g)
            .map(|(v, _)| (v - mean) * (v - mean))
            .sum();
        var[g] = ss / (count[g] - 1) as f64;
    }
    let pooled = ((var[0] + var[1]) / 2.0).sqrt();
    if pooled <= 0.0 {
        return Err(Error::ZeroVarianceFeature("(anonymous)".into()));
    }
    Ok(pooled)
}

/// Weighted empirical quantile: inverse of the weighted ECDF with linear
/// interpolation between jump points.
fn weighted_quantile(sorted: &[(f64, f64)], total: f64, q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let mut cum = 0.0;
    let mut prev_c = 0.0;
    let mut prev_v = sorted[0].0;
    for &(v, w) in sorted {
        cum += w;
        let c = cum / total;
        if q <= c {
            if q <= prev_c || c <= prev_c {
                return if prev_c == 0.0 { sorted[0].0 } else { prev_v };
            }
            let frac = (q - prev_c) / (c - prev_c);
            return prev_v + frac * (v - prev_v);
        }
        prev_c = c;
        prev_v = v;
    }
    sorted[sorted.len() - 1].0
}

/// Paired weighted quantiles of a feature at levels k/(n_quantiles+1); a
/// perfectly balanced feature puts every point on the 45-degree line.
pub fn qq_data(
    feature: &[f64],
    group: &[u8],
    weights: &[f64],
    n_quantiles: usize,
) -> Result<Vec<(f64, f64)>> {
    if n_quantiles < 2 {
        return Err(Error::InvalidConfig("n_quantiles must be >= 2".into()));
    }
    let mut per_group: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for i in 0..feature.len() {
        if weights[i] > 0.0 {
            per_group[usize::from(group[i] == 1)].push((feature[i], weights[i]));
        }
    }
    for g in &mut per_group {
        if g.is_empty() {
            return Err(Error::DegenerateDataset(
                "a group has no weighted rows in qq_data".into(),
            ));
        }
        g.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    }
    let totals = [
        per_group[0].iter().map(|e| e.1).sum::<f64>(),
        per_group[1].iter().map(|e| e.1).sum::<f64>(),
    ];
    let mut out = Vec::with_capacity(n_quantiles);
    for k in 1..=n_quantiles {
        let q = k as f64 / (n_quantiles + 1) as f64;
        let t = weighted_quantile(&per_group[1], totals[1], q);
        let c = weighted_quantile(&per_group[0], totals[0], q);
        out.push((t, c));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterLane {
    UnmatchedTreated,
    MatchedTreated,
    MatchedControl,
    UnmatchedControl,
}

#[derive(Debug, Clone, Serialize)]
pub struct JitterPoint {
    pub row: usize,
    pub linear_score: f64,
    pub lane: JitterLane,
    /// Vertical offset within the lane, uniform in [-1, 1], seeded.
    pub offset: f64,
    /// Circle radius: area is proportional to the match weight.
    pub radius: f64,
}

/// Per-row jitter-plot data for the propensity distribution by lane.
pub fn jitter_data(p: &PropensityResult, m: &MatchResult, seed: u64) -> Vec<JitterPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(p.n_rows());
    for i in 0..p.n_rows() {
        let weight = m.match_weight[i];
        let lane = match (p.protected[i] == 1, weight > 0.0) {
            (true, false) => JitterLane::UnmatchedTreated,
            (true, true) => JitterLane::MatchedTreated,
            (false, true) => JitterLane::MatchedControl,
            (false, false) => JitterLane::UnmatchedControl,
        };
        let offset = rng.random::<f64>() * 2.0 - 1.0;
        out.push(JitterPoint {
            row: i,
            linear_score: p.linear_score[i],
            lane,
            offset,
            radius: weight.sqrt(),
        });
    }
    out
}

/// Balance summary on the distance measure and on every encoded feature.
/// Features whose fixed denominator is zero are skipped.
pub fn balance_report(
    d: &Dataset,
    p: &PropensityResult,
    m: &MatchResult,
) -> Result<BalanceReport> {
    let enc = d.encoded()?;
    let unit = vec![1.0; d.n_rows()];
    let d_bar_before =
        standardized_mean_difference(&p.linear_score, &p.protected, &unit)?;
    let d_bar_after =
        standardized_mean_difference(&p.linear_score, &p.protected, &m.match_weight)?;

    let mut per_feature_smd_before = BTreeMap::new();
    let mut per_feature_smd_after = BTreeMap::new();
    for (c, name) in enc.feature_names.iter().enumerate() {
        let col: Vec<f64> = (0..d.n_rows()).map(|r| enc.features[(r, c)]).collect();
        let before = standardized_mean_difference(&col, &p.protected, &unit);
        let after = standardized_mean_difference(&col, &p.protected, &m.match_weight);
        match (before, after) {
            (Ok(b), Ok(a)) => {
                per_feature_smd_before.insert(name.clone(), b);
                per_feature_smd_after.insert(name.clone(), a);
            }
            (Err(Error::ZeroVarianceFeature(_)), _) | (_, Err(Error::ZeroVarianceFeature(_))) => {
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }

    Ok(BalanceReport {
        d_bar_before,
        d_bar_after,
        per_feature_smd_before,
        per_feature_smd_after,
        n_matched_treated: m.n_treated_matched,
        n_matched_control: m.n_control_matched,
    })
}
