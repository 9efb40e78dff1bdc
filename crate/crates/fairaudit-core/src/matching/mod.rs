//! Matched-sample construction: exact matching, nearest-neighbor matching on
//! the linear propensity score (with and without a caliper), Mahalanobis
//! matching within a propensity caliper, and optimal full matching solved as
//! a min-cost-flow problem.
//!
//! All propensity distances are on the linear (logit) scale. Calipers are
//! expressed in standard deviations of the pooled post-discard linear score.
//! Ties always break toward the lowest row index.

pub mod flow;

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::propensity::PropensityResult;
use crate::worker_threads;

use flow::FlowNetwork;

/// Integer cost resolution for the flow solver.
const COST_SCALE: f64 = 1e9;
/// Complete bipartite graphs are built below this edge count; larger
/// instances use score-nearest-neighbor sparsification.
const DENSE_EDGE_LIMIT: usize = 400_000;
/// Ridge added to the pooled covariance as a fraction of mean diagonal.
const MAHALANOBIS_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMethod {
    Exact,
    Nn,
    NnCaliper,
    MahalCaliper,
    Full,
}

impl std::str::FromStr for MatchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "nn" => Ok(Self::Nn),
            "nn-caliper" => Ok(Self::NnCaliper),
            "mahal-caliper" => Ok(Self::MahalCaliper),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidConfig(format!(
                "unknown matching method `{other}` (expected exact|nn|nn-caliper|mahal-caliper|full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardRule {
    None,
    CommonSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchConfig {
    pub method: MatchMethod,
    /// Caliper width in pooled standard deviations of the linear score.
    pub caliper_sd: f64,
    pub with_replacement: bool,
    pub discard: DiscardRule,
    pub tie_break: TieBreak,
}

impl MatchConfig {
    pub fn new(method: MatchMethod) -> Self {
        Self {
            method,
            caliper_sd: 0.25,
            with_replacement: true,
            discard: DiscardRule::CommonSupport,
            tie_break: TieBreak::LowestIndex,
        }
    }

    fn validate(&self) -> Result<()> {
        let uses_caliper =
            matches!(self.method, MatchMethod::NnCaliper | MatchMethod::MahalCaliper);
        if uses_caliper && !(self.caliper_sd > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "caliper_sd must be > 0, got {}",
                self.caliper_sd
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchPair {
    pub treated: usize,
    pub control: usize,
    pub distance: f64,
}

/// A full-matching subclass: one treated with >=1 controls, or >=1 treated
/// with one control.
#[derive(Debug, Clone, Serialize)]
pub struct Subclass {
    pub treated: Vec<usize>,
    pub controls: Vec<usize>,
}

impl Subclass {
    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.treated.iter().chain(self.controls.iter()).copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    pub config: MatchConfig,
    pub n_rows: usize,
    /// Treated-control links for the pairwise methods; empty for full matching.
    pub pairs: Vec<MatchPair>,
    /// Subclass partition for full matching; empty for pairwise methods.
    pub subclasses: Vec<Subclass>,
    /// Per-row analysis weight: 1 for matched treated, normalized reuse
    /// weights for matched controls, 0 for everything discarded.
    pub match_weight: Vec<f64>,
    /// True for rows excluded from the matched analysis (outside common
    /// support, beyond a caliper, empty donor pool, or simply unused).
    pub discarded: Vec<bool>,
    pub n_treated_matched: usize,
    pub n_control_matched: usize,
}

impl MatchResult {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.subclasses.is_empty()
    }

    /// Row sets matched per group, ascending.
    pub fn matched_treated(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.pairs.iter().map(|p| p.treated).collect();
        out.extend(self.subclasses.iter().flat_map(|s| s.treated.iter().copied()));
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn matched_controls(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.pairs.iter().map(|p| p.control).collect();
        out.extend(self.subclasses.iter().flat_map(|s| s.controls.iter().copied()));
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Flag rows whose linear score falls outside the overlap of the treated and
/// control score ranges.
pub fn common_support_filter(p: &PropensityResult) -> Result<Vec<bool>> {
    let mut min_max = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for (i, &s) in p.linear_score.iter().enumerate() {
        let g = usize::from(p.protected[i]);
        min_max[g].0 = min_max[g].0.min(s);
        min_max[g].1 = min_max[g].1.max(s);
    }
    let lo = min_max[0].0.max(min_max[1].0);
    let hi = min_max[0].1.min(min_max[1].1);
    if lo > hi {
        return Err(Error::NoCommonSupport);
    }
    Ok(p.linear_score.iter().map(|&s| s < lo || s > hi).collect())
}

fn initial_discard(p: &PropensityResult, cfg: &MatchConfig) -> Result<Vec<bool>> {
    match cfg.discard {
        DiscardRule::CommonSupport => common_support_filter(p),
        DiscardRule::None => Ok(vec![false; p.n_rows()]),
    }
}

fn split_groups(protected: &[u8], discarded: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    for i in 0..protected.len() {
        if discarded[i] {
            continue;
        }
        if protected[i] == 1 {
            treated.push(i);
        } else {
            controls.push(i);
        }
    }
    (treated, controls)
}

fn pooled_score_sd(scores: &[f64], rows: impl Iterator<Item = usize>) -> f64 {
    let vals: Vec<f64> = rows.map(|i| scores[i]).collect();
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

/// Chunked parallel map preserving input order; thread count honors
/// `FAIRNESS_AUDIT_THREADS`.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = worker_threads().min(items.len().max(1));
    if threads <= 1 || items.len() < 64 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out: Vec<Vec<R>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|slice| scope.spawn(|| slice.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        out = handles.into_iter().map(|h| h.join().expect("worker")).collect();
    });
    out.into_iter().flatten().collect()
}

/// Controls sorted by (score, index) for nearest-score lookups.
struct ScoreIndex {
    entries: Vec<(f64, usize)>,
}

impl ScoreIndex {
    fn new(scores: &[f64], rows: &[usize]) -> Self {
        let mut entries: Vec<(f64, usize)> = rows.iter().map(|&i| (scores[i], i)).collect();
        entries.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Self { entries }
    }

    /// Nearest entry to `target` among those not marked used; lowest row
    /// index on distance ties. Returns (position, row, distance).
    fn nearest(&self, target: f64, used: Option<&[bool]>) -> Option<(usize, usize, f64)> {
        let n = self.entries.len();
        let start = self.entries.partition_point(|e| e.0 < target);
        let mut best: Option<(usize, usize, f64)> = None;
        // walk outward from the insertion point; a side stays viable while
        // its frontier distance can still tie the best (ties need the
        // smallest row index, so <= rather than <)
        let mut li = start.wrapping_sub(1);
        let mut ri = start;
        loop {
            let ld = (li != usize::MAX).then(|| target - self.entries[li].0);
            let rd = (ri < n).then(|| self.entries[ri].0 - target);
            let best_d = best.map_or(f64::INFINITY, |b| b.2);
            let l_viable = ld.is_some_and(|d| d <= best_d);
            let r_viable = rd.is_some_and(|d| d <= best_d);
            let take_left = match (l_viable, r_viable) {
                (false, false) => break,
                (true, false) => true,
                (false, true) => false,
                (true, true) => ld.expect("viable") <= rd.expect("viable"),
            };
            let (pos, dist) = if take_left {
                let p = li;
                li = li.wrapping_sub(1);
                (p, ld.expect("viable"))
            } else {
                let p = ri;
                ri += 1;
                (p, rd.expect("viable"))
            };
            if used.is_none_or(|u| !u[pos]) {
                let row = self.entries[pos].1;
                let better = match best {
                    None => true,
                    Some((_, br, bd)) => (dist, row) < (bd, br),
                };
                if better {
                    best = Some((pos, row, dist));
                }
            }
        }
        best
    }
}

/// Exact matching: treated and control rows pair iff every encoded feature
/// agrees bit for bit. All cross-group pairs within a cell are emitted.
pub fn exact_match(d: &Dataset) -> Result<MatchResult> {
    let enc = d.encoded()?;
    let n = enc.features.nrows();
    let p = enc.features.ncols();

    let mut cells: BTreeMap<Vec<u64>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..n {
        let key: Vec<u64> = (0..p).map(|c| enc.features[(i, c)].to_bits()).collect();
        let entry = cells.entry(key).or_default();
        if enc.protected[i] == 1 {
            entry.0.push(i);
        } else {
            entry.1.push(i);
        }
    }

    let mut pairs = Vec::new();
    for (treated, controls) in cells.values() {
        if treated.is_empty() || controls.is_empty() {
            continue;
        }
        for &t in treated {
            for &c in controls {
                pairs.push(MatchPair {
                    treated: t,
                    control: c,
                    distance: 0.0,
                });
            }
        }
    }
    pairs.sort_by_key(|p| (p.treated, p.control));

    Ok(finish_pairwise(
        MatchConfig::new(MatchMethod::Exact),
        n,
        pairs,
        vec![false; n],
    ))
}

/// Nearest-neighbor matching on the linear propensity score, optionally with
/// a caliper (`cfg.method == NnCaliper`).
pub fn nn_match(d: &Dataset, p: &PropensityResult, cfg: &MatchConfig) -> Result<MatchResult> {
    cfg.validate()?;
    check_alignment(d, p)?;
    let discarded = initial_discard(p, cfg)?;
    let (treated, controls) = split_groups(&p.protected, &discarded);
    if controls.is_empty() {
        return Err(Error::NoControlsAvailable);
    }
    let scores = &p.linear_score;
    let caliper = match cfg.method {
        MatchMethod::NnCaliper => {
            let sd = pooled_score_sd(scores, treated.iter().chain(&controls).copied());
            Some(cfg.caliper_sd * sd)
        }
        _ => None,
    };

    let index = ScoreIndex::new(scores, &controls);
    let mut pairs = Vec::with_capacity(treated.len());
    if cfg.with_replacement {
        let picks = parallel_map(&treated, |&t| index.nearest(scores[t], None));
        for (&t, pick) in treated.iter().zip(picks) {
            if let Some((_, c, dist)) = pick {
                pairs.push(MatchPair {
                    treated: t,
                    control: c,
                    distance: dist,
                });
            }
        }
    } else {
        let mut used = vec![false; index.entries.len()];
        for &t in &treated {
            if let Some((pos, c, dist)) = index.nearest(scores[t], Some(&used)) {
                used[pos] = true;
                pairs.push(MatchPair {
                    treated: t,
                    control: c,
                    distance: dist,
                });
            }
        }
    }
    if let Some(threshold) = caliper {
        pairs.retain(|p| p.distance <= threshold);
    }

    Ok(finish_pairwise(cfg.clone(), p.n_rows(), pairs, discarded))
}

/// Mahalanobis-metric matching restricted to a propensity caliper donor pool.
pub fn mahalanobis_caliper_match(
    d: &Dataset,
    p: &PropensityResult,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    check_alignment(d, p)?;
    let discarded = initial_discard(p, cfg)?;
    let (treated, controls) = split_groups(&p.protected, &discarded);
    if controls.is_empty() {
        return Err(Error::NoControlsAvailable);
    }
    let scores = &p.linear_score;
    let sd = pooled_score_sd(scores, treated.iter().chain(&controls).copied());
    let threshold = cfg.caliper_sd * sd;

    // Whiten features with the (ridged) pooled within-group covariance so
    // Mahalanobis distance becomes plain Euclidean distance.
    let enc = d.encoded()?;
    let z = whiten(&enc.features, &treated, &controls)?;

    // Controls sorted by score: each donor pool is a contiguous window.
    let mut by_score: Vec<(f64, usize)> = controls.iter().map(|&c| (scores[c], c)).collect();
    by_score.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));

    let pick_donor = |t: usize, used: Option<&[bool]>| -> Option<(usize, usize, f64)> {
        let lo = by_score.partition_point(|e| e.0 < scores[t] - threshold);
        let hi = by_score.partition_point(|e| e.0 <= scores[t] + threshold);
        let mut best: Option<(usize, usize, f64)> = None;
        for pos in lo..hi {
            if used.is_some_and(|u| u[pos]) {
                continue;
            }
            let c = by_score[pos].1;
            let mut d2 = 0.0;
            for k in 0..z.ncols() {
                let diff = z[(t, k)] - z[(c, k)];
                d2 += diff * diff;
            }
            let better = match best {
                None => true,
                Some((_, bc, bd)) => (d2, c) < (bd, bc),
            };
            if better {
                best = Some((pos, c, d2));
            }
        }
        best.map(|(pos, c, d2)| (pos, c, d2.sqrt()))
    };

    let mut pairs = Vec::new();
    if cfg.with_replacement {
        let picks = parallel_map(&treated, |&t| pick_donor(t, None));
        for (&t, pick) in treated.iter().zip(picks) {
            if let Some((_, c, dist)) = pick {
                pairs.push(MatchPair {
                    treated: t,
                    control: c,
                    distance: dist,
                });
            }
        }
    } else {
        let mut used = vec![false; by_score.len()];
        for &t in &treated {
            if let Some((pos, c, dist)) = pick_donor(t, Some(&used)) {
                used[pos] = true;
                pairs.push(MatchPair {
                    treated: t,
                    control: c,
                    distance: dist,
                });
            }
        }
    }

    Ok(finish_pairwise(cfg.clone(), p.n_rows(), pairs, discarded))
}

fn whiten(
    features: &DMatrix<f64>,
    treated: &[usize],
    controls: &[usize],
) -> Result<DMatrix<f64>> {
    let k = features.ncols();
    let mut cov = DMatrix::zeros(k, k);
    let mut dof = 0usize;
    for rows in [treated, controls] {
        if rows.len() < 2 {
            continue;
        }
        let mut mean = vec![0.0; k];
        for &i in rows {
            for c in 0..k {
                mean[c] += features[(i, c)];
            }
        }
        for m in &mut mean {
            *m /= rows.len() as f64;
        }
        for &i in rows {
            for a in 0..k {
                let da = features[(i, a)] - mean[a];
                for b in a..k {
                    cov[(a, b)] += da * (features[(i, b)] - mean[b]);
                }
            }
        }
        dof += rows.len() - 1;
    }
    if dof == 0 {
        return Err(Error::DegenerateDataset(
            "not enough rows for a pooled covariance".into(),
        ));
    }
    for a in 0..k {
        for b in a..k {
            cov[(a, b)] /= dof as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let ridge: f64 = MAHALANOBIS_RIDGE * cov.trace() / k as f64;
    for a in 0..k {
        cov[(a, a)] += ridge.max(MAHALANOBIS_RIDGE);
    }
    let chol = Cholesky::new(cov).ok_or_else(|| {
        Error::DegenerateDataset("pooled covariance is not positive definite".into())
    })?;
    // z rows solve L z = x, i.e. z = L^-1 x
    let l = chol.l();
    let zt = l
        .solve_lower_triangular(&features.transpose())
        .ok_or_else(|| Error::DegenerateDataset("singular covariance factor".into()))?;
    Ok(zt.transpose())
}

/// Optimal full matching: partition retained rows into subclasses (one
/// treated with >=1 controls or >=1 treated with one control) minimizing the
/// total within-subclass linear-score distance. Solved as a min-cost-flow
/// max-weight matching plus cheapest-edge cover completion.
pub fn full_match(d: &Dataset, p: &PropensityResult, cfg: &MatchConfig) -> Result<MatchResult> {
    cfg.validate()?;
    check_alignment(d, p)?;
    let discarded = initial_discard(p, cfg)?;
    let (treated, controls) = split_groups(&p.protected, &discarded);
    if controls.is_empty() {
        return Err(Error::NoControlsAvailable);
    }
    if treated.is_empty() {
        return Err(Error::EmptyMatch);
    }
    let scores = &p.linear_score;

    let nt = treated.len();
    let nc = controls.len();
    // local edge list (t_local, c_local, integer distance)
    let edges = build_full_match_edges(scores, &treated, &controls);

    // cheapest incident edge per vertex
    let mut min_t = vec![(i64::MAX, usize::MAX); nt];
    let mut min_c = vec![(i64::MAX, usize::MAX); nc];
    for &(t, c, d) in &edges {
        if (d, c) < min_t[t] {
            min_t[t] = (d, c);
        }
        if (d, t) < min_c[c] {
            min_c[c] = (d, t);
        }
    }

    // max-weight matching on surplus weights via min-cost flow
    let source = 0usize;
    let sink = 1 + nt + nc;
    let mut net = FlowNetwork::new(sink + 1);
    for t in 0..nt {
        net.add_edge(source, 1 + t, 1, 0);
    }
    for c in 0..nc {
        net.add_edge(1 + nt + c, sink, 1, 0);
    }
    let mut mid = Vec::new();
    for &(t, c, d) in &edges {
        let surplus = min_t[t].0 + min_c[c].0 - d;
        if surplus > 0 {
            let id = net.add_edge(1 + t, 1 + nt + c, 1, -surplus);
            mid.push((id, t, c));
        }
    }
    net.augment_while_negative(source, sink)?;

    // cover = matched edges + cheapest edge for every uncovered vertex
    let mut cover: Vec<(usize, usize)> = Vec::new();
    let mut covered_t = vec![false; nt];
    let mut covered_c = vec![false; nc];
    for &(id, t, c) in &mid {
        if net.residual(id) == 0 {
            cover.push((t, c));
            covered_t[t] = true;
            covered_c[c] = true;
        }
    }
    for t in 0..nt {
        if !covered_t[t] {
            if min_t[t].1 == usize::MAX {
                return Err(Error::InternalFlowError(format!(
                    "treated row {} has no candidate edges",
                    treated[t]
                )));
            }
            cover.push((t, min_t[t].1));
        }
    }
    for c in 0..nc {
        if !covered_c[c] {
            if min_c[c].1 == usize::MAX {
                return Err(Error::InternalFlowError(format!(
                    "control row {} has no candidate edges",
                    controls[c]
                )));
            }
            cover.push((min_c[c].1, c));
        }
    }
    cover.sort_unstable();
    cover.dedup();

    // Zero-distance ties can leave chains where both endpoints have degree
    // two; removing such an edge keeps the cover valid and never raises cost.
    loop {
        let mut deg_t = vec![0usize; nt];
        let mut deg_c = vec![0usize; nc];
        for &(t, c) in &cover {
            deg_t[t] += 1;
            deg_c[c] += 1;
        }
        let Some(pos) = cover
            .iter()
            .position(|&(t, c)| deg_t[t] >= 2 && deg_c[c] >= 2)
        else {
            break;
        };
        cover.remove(pos);
    }

    let subclasses = components_as_subclasses(&cover, &treated, &controls, nt, nc)?;
    let mut result = MatchResult {
        config: cfg.clone(),
        n_rows: p.n_rows(),
        pairs: Vec::new(),
        subclasses,
        match_weight: Vec::new(),
        discarded,
        n_treated_matched: 0,
        n_control_matched: 0,
    };
    finish_weights(&mut result);
    Ok(result)
}

/// Complete bipartite edges below `DENSE_EDGE_LIMIT`; otherwise each treated
/// row links to its score-nearest controls and every control keeps an edge
/// to its nearest treated so a cover always exists.
fn build_full_match_edges(
    scores: &[f64],
    treated: &[usize],
    controls: &[usize],
) -> Vec<(usize, usize, i64)> {
    let nt = treated.len();
    let nc = controls.len();
    let dist = |t: usize, c: usize| -> i64 {
        ((scores[treated[t]] - scores[controls[c]]).abs() * COST_SCALE).round() as i64
    };
    if nt * nc <= DENSE_EDGE_LIMIT {
        let mut edges = Vec::with_capacity(nt * nc);
        for t in 0..nt {
            for c in 0..nc {
                edges.push((t, c, dist(t, c)));
            }
        }
        return edges;
    }

    let k = 16usize.max((3 * nc.max(nt)).div_ceil(2 * nt.min(nc).max(1))).min(nc);
    let mut c_by_score: Vec<(f64, usize)> = (0..nc)
        .map(|c| (scores[controls[c]], c))
        .collect();
    c_by_score.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mut t_by_score: Vec<(f64, usize)> = (0..nt)
        .map(|t| (scores[treated[t]], t))
        .collect();
    t_by_score.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));

    let mut raw: Vec<(usize, usize)> = Vec::with_capacity(nt * k + nc);
    for t in 0..nt {
        let s = scores[treated[t]];
        let start = c_by_score.partition_point(|e| e.0 < s);
        let (mut left, mut right) = (start, start);
        for _ in 0..k {
            let lc = left.checked_sub(1).map(|i| s - c_by_score[i].0);
            let rc = (right < nc).then(|| c_by_score[right].0 - s);
            match (lc, rc) {
                (None, None) => break,
                (Some(_), None) => {
                    left -= 1;
                    raw.push((t, c_by_score[left].1));
                }
                (None, Some(_)) => {
                    raw.push((t, c_by_score[right].1));
                    right += 1;
                }
                (Some(ld), Some(rd)) => {
                    if ld <= rd {
                        left -= 1;
                        raw.push((t, c_by_score[left].1));
                    } else {
                        raw.push((t, c_by_score[right].1));
                        right += 1;
                    }
                }
            }
        }
    }
    for c in 0..nc {
        let s = scores[controls[c]];
        let start = t_by_score.partition_point(|e| e.0 < s);
        let cand_left = start.checked_sub(1).map(|i| (s - t_by_score[i].0, t_by_score[i].1));
        let cand_right = (start < nt).then(|| (t_by_score[start].0 - s, t_by_score[start].1));
        let pick = match (cand_left, cand_right) {
            (Some((ld, lt)), Some((rd, rt))) => {
                if (ld, lt) <= (rd, rt) {
                    lt
                } else {
                    rt
                }
            }
            (Some((_, lt)), None) => lt,
            (None, Some((_, rt))) => rt,
            (None, None) => unreachable!("nt >= 1"),
        };
        raw.push((pick, c));
    }
    raw.sort_unstable();
    raw.dedup();
    raw.into_iter().map(|(t, c)| (t, c, dist(t, c))).collect()
}

fn components_as_subclasses(
    cover: &[(usize, usize)],
    treated: &[usize],
    controls: &[usize],
    nt: usize,
    nc: usize,
) -> Result<Vec<Subclass>> {
    let mut t_adj: Vec<Vec<usize>> = vec![Vec::new(); nt];
    let mut c_adj: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for &(t, c) in cover {
        t_adj[t].push(c);
        c_adj[c].push(t);
    }
    let mut seen_t = vec![false; nt];
    let mut seen_c = vec![false; nc];
    let mut subclasses = Vec::new();
    for start in 0..nt {
        if seen_t[start] {
            continue;
        }
        let mut st = Vec::new();
        let mut sc = Vec::new();
        let mut stack = vec![(true, start)];
        seen_t[start] = true;
        while let Some((is_treated, v)) = stack.pop() {
            if is_treated {
                st.push(v);
                for &c in &t_adj[v] {
                    if !seen_c[c] {
                        seen_c[c] = true;
                        stack.push((false, c));
                    }
                }
            } else {
                sc.push(v);
                for &t in &c_adj[v] {
                    if !seen_t[t] {
                        seen_t[t] = true;
                        stack.push((true, t));
                    }
                }
            }
        }
        if st.is_empty() || sc.is_empty() || (st.len() > 1 && sc.len() > 1) {
            return Err(Error::InternalFlowError(format!(
                "cover component is not a star ({} treated, {} controls)",
                st.len(),
                sc.len()
            )));
        }
        st.sort_unstable();
        sc.sort_unstable();
        subclasses.push(Subclass {
            treated: st.iter().map(|&t| treated[t]).collect(),
            controls: sc.iter().map(|&c| controls[c]).collect(),
        });
    }
    subclasses.sort_by_key(|s| s.treated[0]);
    Ok(subclasses)
}

/// Per-row analysis weights from the match structure.
///
/// Matched treated rows weigh 1. Controls in pairwise matches weigh
/// (times used), normalized so control weights sum to the number of distinct
/// matched controls. Full-matching controls weigh (subclass treated count) /
/// (subclass control count), normalized so control weights sum to the total
/// matched control count. Discarded and unmatched rows weigh 0.
pub fn compute_match_weights(m: &MatchResult) -> Vec<f64> {
    let mut w = vec![0.0; m.n_rows];
    for t in m.matched_treated() {
        w[t] = 1.0;
    }
    if !m.pairs.is_empty() {
        let mut uses: BTreeMap<usize, usize> = BTreeMap::new();
        for pair in &m.pairs {
            *uses.entry(pair.control).or_insert(0) += 1;
        }
        let distinct = uses.len() as f64;
        let total_uses = m.pairs.len() as f64;
        for (c, count) in uses {
            w[c] = count as f64 * distinct / total_uses;
        }
    }
    if !m.subclasses.is_empty() {
        let total_controls: usize = m.subclasses.iter().map(|s| s.controls.len()).sum();
        let sum_raw: f64 = m.subclasses.iter().map(|s| s.treated.len() as f64).sum();
        let scale = total_controls as f64 / sum_raw;
        for s in &m.subclasses {
            let raw = s.treated.len() as f64 / s.controls.len() as f64;
            for &c in &s.controls {
                w[c] = raw * scale;
            }
        }
    }
    w
}

fn finish_pairwise(
    config: MatchConfig,
    n_rows: usize,
    pairs: Vec<MatchPair>,
    discarded: Vec<bool>,
) -> MatchResult {
    let mut result = MatchResult {
        config,
        n_rows,
        pairs,
        subclasses: Vec::new(),
        match_weight: Vec::new(),
        discarded,
        n_treated_matched: 0,
        n_control_matched: 0,
    };
    finish_weights(&mut result);
    result
}

fn finish_weights(result: &mut MatchResult) {
    result.match_weight = compute_match_weights(result);
    result.n_treated_matched = result.matched_treated().len();
    result.n_control_matched = result.matched_controls().len();
    for i in 0..result.n_rows {
        if result.match_weight[i] == 0.0 {
            result.discarded[i] = true;
        }
    }
}

fn check_alignment(d: &Dataset, p: &PropensityResult) -> Result<()> {
    if d.n_rows() != p.n_rows() {
        return Err(Error::InvalidConfig(format!(
            "propensity result has {} rows, dataset has {}",
            p.n_rows(),
            d.n_rows()
        )));
    }
    Ok(())
}

/// Dispatch on the configured method.
pub fn run_match(d: &Dataset, p: &PropensityResult, cfg: &MatchConfig) -> Result<MatchResult> {
    match cfg.method {
        MatchMethod::Exact => exact_match(d),
        MatchMethod::Nn | MatchMethod::NnCaliper => nn_match(d, p, cfg),
        MatchMethod::MahalCaliper => mahalanobis_caliper_match(d, p, cfg),
        MatchMethod::Full => full_match(d, p, cfg),
    }
}

/// Total within-subclass distance of a full matching under |score| distance.
pub fn full_match_total_distance(m: &MatchResult, scores: &[f64]) -> f64 {
    let mut total = 0.0;
    for s in &m.subclasses {
        if s.treated.len() == 1 {
            let t = s.treated[0];
            for &c in &s.controls {
                total += (scores[t] - scores[c]).abs();
            }
        } else {
            let c = s.controls[0];
            for &t in &s.treated {
                total += (scores[t] - scores[c]).abs();
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Cell, ColumnKind, ColumnRole, ColumnSchema, Dataset};
    use crate::glm::{FittedGlm, GlmFamily};
    use nalgebra::{DMatrix, DVector};

    fn dummy_glm(n: usize) -> FittedGlm {
        FittedGlm {
            family: GlmFamily::Logistic,
            coefficients: DVector::zeros(1),
            covariance_model: DMatrix::identity(1, 1),
            covariance_sandwich: DMatrix::identity(1, 1),
            n_obs: n,
            converged: true,
            iterations: 1,
            weights_used: DVector::from_element(n, 1.0),
            fitted: DVector::from_element(n, 0.5),
            bread: DMatrix::identity(1, 1),
            se_floor: DVector::zeros(1),
        }
    }

    fn propensity_from_scores(scores: Vec<f64>, protected: Vec<u8>) -> PropensityResult {
        let n = scores.len();
        let marginal = protected.iter().map(|v| f64::from(*v)).sum::<f64>() / n as f64;
        PropensityResult {
            probability: scores.iter().map(|s| crate::glm::expit(*s)).collect(),
            linear_score: scores,
            stabilized_weight: vec![1.0; n],
            marginal_treated: marginal,
            model: dummy_glm(n),
            protected,
        }
    }

    /// Dataset with a single feature column holding the given values.
    fn dataset_1d(x: &[f64], protected: &[u8]) -> Dataset {
        let schema = vec![
            ColumnSchema::new("x", ColumnKind::Numeric, ColumnRole::Feature),
            ColumnSchema::new("a", ColumnKind::Binary, ColumnRole::Protected),
            ColumnSchema::new("y", ColumnKind::Numeric, ColumnRole::Outcome),
        ];
        let cols = vec![
            x.iter().map(|v| Cell::Num(*v)).collect(),
            protected.iter().map(|a| Cell::Cat(a.to_string())).collect(),
            x.iter().map(|v| Cell::Num(v * 2.0)).collect(),
        ];
        Dataset::from_columns(schema, cols)
            .unwrap()
            .one_hot_encode()
            .unwrap()
    }

    fn dataset_2d(rows: &[(f64, f64)], protected: &[u8]) -> Dataset {
        let schema = vec![
            ColumnSchema::new("x1", ColumnKind::Numeric, ColumnRole::Feature),
            ColumnSchema::new("x2", ColumnKind::Numeric, ColumnRole::Feature),
            ColumnSchema::new("a", ColumnKind::Binary, ColumnRole::Protected),
            ColumnSchema::new("y", ColumnKind::Numeric, ColumnRole::Outcome),
        ];
        let cols = vec![
            rows.iter().map(|r| Cell::Num(r.0)).collect(),
            rows.iter().map(|r| Cell::Num(r.1)).collect(),
            protected.iter().map(|a| Cell::Cat(a.to_string())).collect(),
            rows.iter().map(|r| Cell::Num(r.0 + r.1)).collect(),
        ];
        Dataset::from_columns(schema, cols)
            .unwrap()
            .one_hot_encode()
            .unwrap()
    }

    #[test]
    fn common_support_trims_non_overlapping_tails() {
        let scores = vec![0.0, 1.0, 2.0, 1.0, 2.0, 3.0];
        let protected = vec![1, 1, 1, 0, 0, 0];
        let p = propensity_from_scores(scores, protected);
        let discarded = common_support_filter(&p).unwrap();
        assert_eq!(discarded, vec![true, false, false, false, false, true]);
    }

    #[test]
    fn common_support_keeps_identical_ranges() {
        let scores = vec![0.0, 1.0, 0.0, 1.0];
        let p = propensity_from_scores(scores, vec![1, 1, 0, 0]);
        let discarded = common_support_filter(&p).unwrap();
        assert!(discarded.iter().all(|d| !d));
    }

    #[test]
    fn common_support_errors_on_empty_overlap() {
        let scores = vec![0.0, 1.0, 5.0, 6.0];
        let p = propensity_from_scores(scores, vec![1, 1, 0, 0]);
        assert!(matches!(
            common_support_filter(&p),
            Err(Error::NoCommonSupport)
        ));
    }

    #[test]
    fn nn_finds_unique_nearest_neighbors() {
        let scores = vec![0.0, 1.0, 0.1, 0.9];
        let protected = vec![1, 1, 0, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores, protected);
        let mut cfg = MatchConfig::new(MatchMethod::Nn);
        cfg.discard = DiscardRule::None;
        let m = nn_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert_eq!((m.pairs[0].treated, m.pairs[0].control), (0, 2));
        assert_eq!((m.pairs[1].treated, m.pairs[1].control), (1, 3));
        assert_eq!(m.n_treated_matched, 2);
        assert_eq!(m.n_control_matched, 2);
        // 1:1 matching without reuse: all matched weights are 1
        for i in 0..4 {
            assert_eq!(m.match_weight[i], 1.0);
        }
    }

    #[test]
    fn nn_agrees_with_exhaustive_search() {
        // brute force over all control choices per treated row
        let t_scores = [0.45, -1.2, 0.8];
        let c_scores = [0.5, -1.0, 1.3];
        let scores: Vec<f64> = t_scores.iter().chain(c_scores.iter()).copied().collect();
        let protected = vec![1, 1, 1, 0, 0, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores.clone(), protected);
        let mut cfg = MatchConfig::new(MatchMethod::Nn);
        cfg.discard = DiscardRule::None;
        let m = nn_match(&d, &p, &cfg).unwrap();
        for (ti, &t) in [0usize, 1, 2].iter().enumerate() {
            let mut best = (f64::INFINITY, usize::MAX);
            for (ci, &c) in [3usize, 4, 5].iter().enumerate() {
                let dist = (t_scores[ti] - c_scores[ci]).abs();
                if (dist, c) < best {
                    best = (dist, c);
                }
            }
            let pair = m.pairs.iter().find(|p| p.treated == t).unwrap();
            assert_eq!(pair.control, best.1);
            assert!((pair.distance - best.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nn_ties_break_to_lowest_control_index() {
        // controls at equal distance on both sides
        let scores = vec![0.5, 1.0, 0.0, 1.0, 0.0];
        let protected = vec![1, 0, 0, 0, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores, protected);
        let mut cfg = MatchConfig::new(MatchMethod::Nn);
        cfg.discard = DiscardRule::None;
        let m = nn_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].control, 1);
    }

    #[test]
    fn caliper_drops_distant_pairs() {
        // treated at 0, lone control at 0.3; pooled sd is ~0.212 so the
        // 0.25-sd caliper (~0.053) rejects the 0.3 pair
        let scores = vec![0.0, 0.3];
        let protected = vec![1, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores, protected);
        let mut cfg = MatchConfig::new(MatchMethod::NnCaliper);
        cfg.discard = DiscardRule::None;
        let m = nn_match(&d, &p, &cfg).unwrap();
        assert!(m.pairs.is_empty());
        assert!(m.is_empty());
        assert_eq!(m.n_treated_matched, 0);
        assert!(m.discarded.iter().all(|d| *d));
    }

    #[test]
    fn caliper_keeps_close_pairs() {
        let scores = vec![0.0, 0.01, 2.0, -2.0];
        let protected = vec![1, 0, 0, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores, protected);
        let mut cfg = MatchConfig::new(MatchMethod::NnCaliper);
        cfg.discard = DiscardRule::None;
        let m = nn_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].control, 1);
    }

    #[test]
    fn caliper_config_must_be_positive() {
        let mut cfg = MatchConfig::new(MatchMethod::NnCaliper);
        cfg.caliper_sd = 0.0;
        assert!(cfg.validate().is_err());
        cfg.caliper_sd = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exact_match_pairs_identical_rows() {
        let rows = [(1.0, 2.0), (3.0, 4.0), (1.0, 2.0), (3.0, 4.0), (9.0, 9.0)];
        let protected = [1, 1, 0, 0, 0];
        let d = dataset_2d(&rows, &protected);
        let m = exact_match(&d).unwrap();
        assert_eq!(m.pairs.len(), 2);
        for pair in &m.pairs {
            assert_eq!(pair.distance, 0.0);
            assert_eq!(rows[pair.treated], rows[pair.control]);
        }
        // the unmatched control row is discarded
        assert!(m.discarded[4]);
    }

    #[test]
    fn exact_match_on_continuous_data_is_empty() {
        let rows: Vec<(f64, f64)> = (0..10)
            .map(|i| (f64::from(i) * 0.37, f64::from(i) * 1.17 + 0.05))
            .collect();
        let protected = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let d = dataset_2d(&rows, &protected);
        let m = exact_match(&d).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.n_treated_matched, 0);
    }

    #[test]
    fn exact_match_shares_a_control_between_identical_treated() {
        let rows = [(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)];
        let protected = [1, 1, 0];
        let d = dataset_2d(&rows, &protected);
        let m = exact_match(&d).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert!(m.pairs.iter().all(|p| p.control == 2));
        // control used twice, one distinct control: weight 2 * (1/2) = 1
        assert_eq!(m.match_weight[2], 1.0);
        assert_eq!(m.match_weight[0], 1.0);
        assert_eq!(m.match_weight[1], 1.0);
    }

    #[test]
    fn reused_control_weights_follow_normalization() {
        // one control matched twice, another once: raw (2,1) -> (4/3, 2/3)
        let m = MatchResult {
            config: MatchConfig::new(MatchMethod::Nn),
            n_rows: 5,
            pairs: vec![
                MatchPair { treated: 0, control: 3, distance: 0.1 },
                MatchPair { treated: 1, control: 3, distance: 0.1 },
                MatchPair { treated: 2, control: 4, distance: 0.1 },
            ],
            subclasses: Vec::new(),
            match_weight: Vec::new(),
            discarded: vec![false; 5],
            n_treated_matched: 0,
            n_control_matched: 0,
        };
        let w = compute_match_weights(&m);
        assert!((w[3] - 4.0 / 3.0).abs() < 1e-12);
        assert!((w[4] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[3] + w[4] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_match_subclass_weights_single_case() {
        // lone subclass {1 treated, 2 controls}: raw 1/2 each, normalized
        // so control weights sum to 2 -> weight 1 each
        let m = MatchResult {
            config: MatchConfig::new(MatchMethod::Full),
            n_rows: 3,
            pairs: Vec::new(),
            subclasses: vec![Subclass { treated: vec![0], controls: vec![1, 2] }],
            match_weight: Vec::new(),
            discarded: vec![false; 3],
            n_treated_matched: 0,
            n_control_matched: 0,
        };
        let w = compute_match_weights(&m);
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn mahalanobis_ordering_matches_hand_computation() {
        // treated row 0 at the origin; controls form an elongated cloud so
        // the x1 direction is cheap. Oracle: d^2 = delta' S^-1 delta with S
        // computed by hand from the control rows (treated has n=1, no dof).
        let rows = [
            (0.0, 0.0),   // treated
            (8.0, 0.1),   // donor A: far in x1
            (0.5, 1.4),   // donor B: near in x1, far in x2
            (12.0, -0.2),
            (-11.0, 0.3),
            (1.0, -1.2),
        ];
        let protected = [1, 0, 0, 0, 0, 0];
        let d = dataset_2d(&rows, &protected);
        // equal scores put every control in the donor pool
        let p = propensity_from_scores(vec![0.0; 6], protected.to_vec());
        let cfg = MatchConfig::new(MatchMethod::MahalCaliper);
        let m = mahalanobis_caliper_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 1);

        // hand-computed pooled covariance of the 5 control rows
        let controls = &rows[1..];
        let nc = controls.len() as f64;
        let mean = controls.iter().fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1));
        let mean = (mean.0 / nc, mean.1 / nc);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for r in controls {
            let dx = r.0 - mean.0;
            let dy = r.1 - mean.1;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let dof = nc - 1.0;
        let (sxx, sxy, syy) = (sxx / dof, sxy / dof, syy / dof);
        let det = sxx * syy - sxy * sxy;
        let d2 = |r: (f64, f64)| (syy * r.0 * r.0 - 2.0 * sxy * r.0 * r.1 + sxx * r.1 * r.1) / det;
        let best = (1..rows.len())
            .min_by(|a, b| {
                d2(rows[*a])
                    .partial_cmp(&d2(rows[*b]))
                    .expect("finite distances")
            })
            .unwrap();
        assert_eq!(m.pairs[0].control, best);
        assert!((m.pairs[0].distance - d2(rows[best]).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn mahalanobis_excludes_donors_outside_caliper() {
        // donor 1 is identical in features but far in propensity; donor 2 is
        // inside the caliper with a worse feature distance
        let rows = [(0.0, 0.0), (0.0, 0.0), (3.0, 3.0), (5.0, -1.0), (-4.0, 2.0)];
        let protected = [1, 0, 0, 0, 0];
        let d = dataset_2d(&rows, &protected);
        let scores = vec![0.0, 50.0, 0.01, 0.02, -0.01];
        let p = propensity_from_scores(scores, protected.to_vec());
        let mut cfg = MatchConfig::new(MatchMethod::MahalCaliper);
        cfg.discard = DiscardRule::None;
        let m = mahalanobis_caliper_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_ne!(m.pairs[0].control, 1, "caliper must precede the metric");
    }

    #[test]
    fn mahalanobis_discards_treated_with_empty_donor_pool() {
        let rows = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (0.0, 3.0)];
        let protected = [1, 1, 0, 0];
        let d = dataset_2d(&rows, &protected);
        // second treated sits far outside every donor's caliper but inside
        // the common-support band is irrelevant with discard=None
        let scores = vec![0.0, 40.0, 0.05, -0.05];
        let p = propensity_from_scores(scores, protected.to_vec());
        let mut cfg = MatchConfig::new(MatchMethod::MahalCaliper);
        cfg.discard = DiscardRule::None;
        let m = mahalanobis_caliper_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].treated, 0);
        assert!(m.discarded[1]);
    }

    #[test]
    fn full_match_single_pair_is_one_subclass() {
        let scores = vec![0.2, 0.5];
        let protected = vec![1, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores, protected);
        let mut cfg = MatchConfig::new(MatchMethod::Full);
        cfg.discard = DiscardRule::None;
        let m = full_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.subclasses.len(), 1);
        assert_eq!(m.subclasses[0].treated, vec![0]);
        assert_eq!(m.subclasses[0].controls, vec![1]);
        assert_eq!(m.match_weight, vec![1.0, 1.0]);
    }

    /// Exhaustive full-matching oracle: enumerate every partition of the
    /// rows into valid subclasses and return the minimum total distance.
    fn brute_force_full_match(t_scores: &[f64], c_scores: &[f64]) -> f64 {
        fn recurse(
            t_left: &mut Vec<usize>,
            c_left: &mut Vec<usize>,
            t_scores: &[f64],
            c_scores: &[f64],
        ) -> f64 {
            if t_left.is_empty() && c_left.is_empty() {
                return 0.0;
            }
            if t_left.is_empty() || c_left.is_empty() {
                return f64::INFINITY;
            }
            // build one subclass containing the first remaining treated row
            let t0 = t_left[0];
            let mut best = f64::INFINITY;
            // case 1: t0 alone with a nonempty subset of remaining controls
            let c_snapshot = c_left.clone();
            let subsets = 1usize << c_snapshot.len();
            for mask in 1..subsets {
                let chosen: Vec<usize> = (0..c_snapshot.len())
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| c_snapshot[b])
                    .collect();
                let cost: f64 = chosen
                    .iter()
                    .map(|&c| (t_scores[t0] - c_scores[c]).abs())
                    .sum();
                let mut t_rest: Vec<usize> = t_left[1..].to_vec();
                let mut c_rest: Vec<usize> = c_snapshot
                    .iter()
                    .copied()
                    .filter(|c| !chosen.contains(c))
                    .collect();
                best = best.min(cost + recurse(&mut t_rest, &mut c_rest, t_scores, c_scores));
            }
            // case 2: t0 grouped with other treated rows and one control
            let t_snapshot: Vec<usize> = t_left[1..].to_vec();
            let t_subsets = 1usize << t_snapshot.len();
            for mask in 1..t_subsets {
                let extra: Vec<usize> = (0..t_snapshot.len())
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| t_snapshot[b])
                    .collect();
                for &c in c_left.iter() {
                    let cost: f64 = std::iter::once(t0)
                        .chain(extra.iter().copied())
                        .map(|t| (t_scores[t] - c_scores[c]).abs())
                        .sum();
                    let mut t_rest: Vec<usize> = t_snapshot
                        .iter()
                        .copied()
                        .filter(|t| !extra.contains(t))
                        .collect();
                    let mut c_rest: Vec<usize> =
                        c_left.iter().copied().filter(|&cc| cc != c).collect();
                    best = best.min(cost + recurse(&mut t_rest, &mut c_rest, t_scores, c_scores));
                }
            }
            best
        }
        let mut t: Vec<usize> = (0..t_scores.len()).collect();
        let mut c: Vec<usize> = (0..c_scores.len()).collect();
        recurse(&mut t, &mut c, t_scores, c_scores)
    }

    #[test]
    fn full_match_two_treated_three_controls_is_optimal() {
        let t_scores = [0.1, 0.9];
        let c_scores = [0.0, 0.45, 1.0];
        let scores: Vec<f64> = t_scores.iter().chain(c_scores.iter()).copied().collect();
        let protected = vec![1, 1, 0, 0, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores.clone(), protected);
        let mut cfg = MatchConfig::new(MatchMethod::Full);
        cfg.discard = DiscardRule::None;
        let m = full_match(&d, &p, &cfg).unwrap();
        let total = full_match_total_distance(&m, &p.linear_score);
        let oracle = brute_force_full_match(&t_scores, &c_scores);
        assert!(
            (total - oracle).abs() < 1e-9,
            "flow total {total} vs oracle {oracle}"
        );
        // every retained row sits in exactly one subclass
        let mut seen = vec![0usize; 5];
        for s in &m.subclasses {
            assert!(!s.treated.is_empty() && !s.controls.is_empty());
            assert!(s.treated.len() == 1 || s.controls.len() == 1);
            for r in s.rows() {
                seen[r] += 1;
            }
        }
        assert_eq!(seen, vec![1; 5]);
    }

    #[test]
    fn matching_is_deterministic() {
        use crate::propensity::fit_propensity;
        use crate::synthgen::{generate, SynthConfig};
        let data = generate(&SynthConfig {
            n: 300,
            seed: 17,
            ..Default::default()
        })
        .unwrap();
        let p = fit_propensity(&data.dataset).unwrap();
        for method in [MatchMethod::Nn, MatchMethod::NnCaliper, MatchMethod::MahalCaliper, MatchMethod::Full] {
            let cfg = MatchConfig::new(method);
            let a = run_match(&data.dataset, &p, &cfg).unwrap();
            let b = run_match(&data.dataset, &p, &cfg).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            );
        }
    }

    #[test]
    fn nn_without_replacement_uses_each_control_once() {
        let scores = vec![0.0, 0.1, 0.05, 0.2];
        let protected = vec![1, 1, 0, 0];
        let d = dataset_1d(&scores, &protected);
        let p = propensity_from_scores(scores, protected);
        let mut cfg = MatchConfig::new(MatchMethod::Nn);
        cfg.with_replacement = false;
        cfg.discard = DiscardRule::None;
        let m = nn_match(&d, &p, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 2);
        let mut controls: Vec<usize> = m.pairs.iter().map(|p| p.control).collect();
        controls.sort_unstable();
        controls.dedup();
        assert_eq!(controls.len(), 2);
    }
}
