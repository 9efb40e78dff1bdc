//! Sensitivity of matched-pair conclusions to hidden bias.
//!
//! Gamma is the odds ratio by which two matched individuals may differ in
//! their odds of carrying the treated level because of an unmeasured
//! confounder. For each Gamma the matched-pair test statistic is bounded
//! under the least and most favorable hidden-bias configurations, giving an
//! interval [p_lower, p_upper] around the true p-value. The critical Gamma
//! is where p_upper first crosses the significance level.
//!
//! Continuous outcomes use the Wilcoxon signed-rank statistic with bounding
//! sign probabilities Gamma/(1+Gamma) and 1/(1+Gamma); the tail is computed
//! exactly (dynamic program over rank sums) up to 200 informative pairs and
//! by normal approximation beyond. Binary outcomes use exact binomial tails
//! over discordant pairs. Both test the one-sided alternative that treated
//! outcomes exceed control outcomes; callers mirror the differences to test
//! the other direction.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::glm::standard_normal_cdf;
use crate::matching::MatchResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityTest {
    SignedRank,
    BinaryDiscordant,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub gammas: Vec<f64>,
    pub p_upper: Vec<f64>,
    pub p_lower: Vec<f64>,
    /// Smallest grid Gamma with p_upper > alpha; None means "beyond grid".
    /// Populated by [`critical_gamma`]; bounds alone leave it None.
    pub critical_gamma: Option<f64>,
    pub test_kind: SensitivityTest,
}

/// Default sweep 1.0, 1.5, ..., 10.0.
pub fn default_gamma_grid() -> Vec<f64> {
    gamma_grid(10.0, 0.5).expect("valid default grid")
}

/// Grid 1.0, 1.0+step, ..., up to `max` inclusive.
pub fn gamma_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(max >= 1.0) || !(step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gamma grid needs max >= 1 and step > 0 (got max={max}, step={step})"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let g = 1.0 + f64::from(k) * step;
        if g > max + 1e-12 {
            break;
        }
        out.push(g);
        k += 1;
    }
    Ok(out)
}

fn validate_gammas(gammas: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(Error::InvalidConfig("empty gamma grid".into()));
    }
    for pair in gammas.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidConfig("gamma grid must be increasing".into()));
        }
    }
    if gammas[0] < 1.0 {
        return Err(Error::InvalidConfig("gamma values must be >= 1".into()));
    }
    Ok(())
}

/// Pairs to which the exact signed-rank tail applies; the normal
/// approximation takes over beyond this.
const EXACT_SIGNED_RANK_LIMIT: usize = 200;

struct SignedRankParts {
    /// Observed statistic: sum of midranks over positive differences.
    t_stat: f64,
    rank_sum: f64,
    rank_sq_sum: f64,
    /// Doubled midranks (integers) for the exact tail.
    ranks2: Vec<u64>,
}

/// Midranks of |d| for the informative (nonzero) differences.
fn signed_rank_parts(diffs: &[f64]) -> Option<SignedRankParts> {
    let mut informative: Vec<(f64, bool)> = diffs
        .iter()
        .filter(|d| **d != 0.0)
        .map(|d| (d.abs(), *d > 0.0))
        .collect();
    if informative.is_empty() {
        return None;
    }
    informative.sort_by(|a, b| a.partial_cmp(b).expect("finite differences"));
    let n = informative.len();
    let mut t_stat = 0.0;
    let mut rank_sum = 0.0;
    let mut rank_sq_sum = 0.0;
    let mut ranks2 = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && informative[j].0 == informative[i].0 {
            j += 1;
        }
        // midrank for the tie block [i, j); doubled it is the integer i+1+j
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &informative[i..j] {
            rank_sum += midrank;
            rank_sq_sum += midrank * midrank;
            ranks2.push((i + 1 + j) as u64);
            if item.1 {
                t_stat += midrank;
            }
        }
        i = j;
    }
    Some(SignedRankParts {
        t_stat,
        rank_sum,
        rank_sq_sum,
        ranks2,
    })
}

/// Exact P(T >= t_obs) when each rank enters the statistic independently
/// with probability `sign_p`: dynamic program over achievable doubled-rank
/// sums.
fn signed_rank_tail_exact(ranks2: &[u64], sign_p: f64, t2_obs: u64) -> f64 {
    let total: usize = ranks2.iter().map(|r| *r as usize).sum();
    let mut dp = vec![0.0f64; total + 1];
    dp[0] = 1.0;
    let mut top = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        top += r;
        for s in (0..=top).rev() {
            let stay = dp[s] * (1.0 - sign_p);
            let come = if s >= r { dp[s - r] * sign_p } else { 0.0 };
            dp[s] = stay + come;
        }
    }
    if t2_obs as usize > total {
        return 0.0;
    }
    dp[t2_obs as usize..].iter().sum::<f64>().min(1.0)
}

/// Upper tail P(Bin(n, p) >= k), summed in log space.
fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let ln_n_fact = ln_gamma(n as f64 + 1.0);
    let mut total = 0.0;
    for j in k..=n {
        let ln_term = ln_n_fact - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0)
            + j as f64 * ln_p
            + (n - j) as f64 * ln_q;
        total += ln_term.exp();
    }
    total.min(1.0)
}

/// Hidden-bias bounds on the one-sided matched-pair test across a Gamma grid.
pub fn rosenbaum_bounds(
    pairs: &[(f64, f64)],
    gammas: &[f64],
    outcome: OutcomeKind,
) -> Result<SensitivityReport> {
    validate_gammas(gammas)?;
    match outcome {
        OutcomeKind::Continuous => {
            let diffs: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
            let parts = signed_rank_parts(&diffs).ok_or(Error::NoInformativePairs)?;
            let exact = parts.ranks2.len() <= EXACT_SIGNED_RANK_LIMIT;
            let t2_obs = (2.0 * parts.t_stat).round() as u64;
            let tail = |sign_p: f64| -> f64 {
                if exact {
                    signed_rank_tail_exact(&parts.ranks2, sign_p, t2_obs)
                } else {
                    let mean = sign_p * parts.rank_sum;
                    let var = sign_p * (1.0 - sign_p) * parts.rank_sq_sum;
                    let z = (parts.t_stat - mean) / var.sqrt();
                    1.0 - standard_normal_cdf(z)
                }
            };
            let mut p_upper = Vec::with_capacity(gammas.len());
            let mut p_lower = Vec::with_capacity(gammas.len());
            for &g in gammas {
                p_upper.push(tail(g / (1.0 + g)));
                p_lower.push(tail(1.0 / (1.0 + g)));
            }
            Ok(SensitivityReport {
                gammas: gammas.to_vec(),
                p_upper,
                p_lower,
                critical_gamma: None,
                test_kind: SensitivityTest::SignedRank,
            })
        }
        OutcomeKind::Binary => {
            let mut discordant = 0u64;
            let mut treated_favoring = 0u64;
            for &(t, c) in pairs {
                if t != c {
                    discordant += 1;
                    if t > c {
                        treated_favoring += 1;
                    }
                }
            }
            if discordant == 0 {
                return Err(Error::NoInformativePairs);
            }
            let mut p_upper = Vec::with_capacity(gammas.len());
            let mut p_lower = Vec::with_capacity(gammas.len());
            for &g in gammas {
                p_upper.push(binomial_upper_tail(discordant, g / (1.0 + g), treated_favoring));
                p_lower.push(binomial_upper_tail(discordant, 1.0 / (1.0 + g), treated_favoring));
            }
            Ok(SensitivityReport {
                gammas: gammas.to_vec(),
                p_upper,
                p_lower,
                critical_gamma: None,
                test_kind: SensitivityTest::BinaryDiscordant,
            })
        }
    }
}

/// Smallest grid Gamma at which p_upper exceeds alpha; None when the bound
/// stays significant across the whole grid ("beyond grid").
pub fn critical_gamma(report: &SensitivityReport, alpha: f64) -> Option<f64> {
    report
        .gammas
        .iter()
        .zip(&report.p_upper)
        .find(|(_, p)| **p > alpha)
        .map(|(g, _)| *g)
}

/// Reduce a match structure to 1:1 pairs for the pair-based bounds: each
/// matched treated row proposes its nearest matched control (within its own
/// pairs or subclass, by linear-score distance); proposals are accepted
/// greedily by distance, deduplicating controls.
pub fn reduce_to_pairs(m: &MatchResult, linear_scores: &[f64]) -> Vec<(usize, usize)> {
    let mut proposals: Vec<(f64, usize, usize)> = Vec::new();
    if !m.pairs.is_empty() {
        let mut best: std::collections::BTreeMap<usize, (f64, usize)> =
            std::collections::BTreeMap::new();
        for p in &m.pairs {
            let d = (linear_scores[p.treated] - linear_scores[p.control]).abs();
            let entry = best.entry(p.treated).or_insert((f64::INFINITY, usize::MAX));
            if (d, p.control) < *entry {
                *entry = (d, p.control);
            }
        }
        for (t, (d, c)) in best {
            proposals.push((d, t, c));
        }
    }
    for sub in &m.subclasses {
        for &t in &sub.treated {
            let mut best = (f64::INFINITY, usize::MAX);
            for &c in &sub.controls {
                let d = (linear_scores[t] - linear_scores[c]).abs();
                if (d, c) < best {
                    best = (d, c);
                }
            }
            if best.1 != usize::MAX {
                proposals.push((best.0, t, best.1));
            }
        }
    }
    proposals.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut used = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (_, t, c) in proposals {
        if used.insert(c) {
            out.push((t, c));
        }
    }
    out.sort_unstable();
    out
}
