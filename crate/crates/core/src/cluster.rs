//! Interval partitioning of the diffusion time axis.
//!
//! * [`solve_three_interval`]: threshold search for `(t1, t2)` on endpoint
//!   agreement records.
//! * [`solve_n_interval`]: exact dynamic program over a candidate grid that
//!   minimizes the within-interval cost of random time pairs.
//! * [`baseline_uniform_t`], [`baseline_uniform_logsnr`]: reference
//!   partitions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::VpSchedule;
use crate::similarity::{EndpointSample, PairSample};

/// Minimum number of samples behind a feasible threshold candidate.
pub const DEFAULT_MIN_SUPPORT: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower (t1)",
            Side::Upper => "upper (t2)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "optimal-denoiser-3")]
    OptimalDenoiser3,
    #[serde(rename = "optimal-denoiser-n")]
    OptimalDenoiserN,
    #[serde(rename = "uniform-t")]
    UniformT,
    #[serde(rename = "uniform-logsnr")]
    UniformLogSnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    /// Cost `1 - s` per same-interval pair.
    #[default]
    #[serde(rename = "within-dissimilarity")]
    WithinDissimilarity,
    /// Cost `s` per same-interval pair, as the integral is printed.
    #[serde(rename = "within-similarity-literal")]
    WithinSimilarityLiteral,
}

impl Objective {
    fn cost(self, s: f64) -> f64 {
        match self {
            Objective::WithinDissimilarity => 1.0 - s,
            Objective::WithinSimilarityLiteral => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub cuts: Vec<f64>,
    pub n_intervals: usize,
    pub method: Method,
    pub config_echo: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_value: Option<f64>,
    /// Mean lower-endpoint agreement on `[0, t1]` and upper on `[t2, 1]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_means: Option<[f64; 2]>,
}

impl Partition {
    fn new(cuts: Vec<f64>, method: Method) -> Result<Self> {
        let ordered = cuts.windows(2).all(|w| w[0] < w[1]);
        let inside = cuts.iter().all(|&c| c > 0.0 && c < 1.0);
        if !ordered || !inside {
            return Err(Error::arg(format!("cuts {cuts:?} are not strictly increasing inside (0, 1)")));
        }
        Ok(Self {
            n_intervals: cuts.len() + 1,
            cuts,
            method,
            config_echo: BTreeMap::new(),
            objective_value: None,
            achieved_means: None,
        })
    }

    pub fn echo(mut self, key: &str, value: impl ToString) -> Self {
        self.config_echo.insert(key.to_string(), value.to_string());
        self
    }
}

/// Ordered candidate times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: Vec<f64>,
}

impl GridSpec {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("grid must contain at least one point"));
        }
        if !points.windows(2).all(|w| w[0] < w[1]) || points.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::arg("grid points must be strictly increasing within (0, 1]"));
        }
        Ok(Self { points })
    }

    /// `count` evenly spaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::arg("a uniform grid needs at least two points"));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        points[count - 1] = hi;
        Self::new(points)
    }

    /// Threshold-search grid: `count` points spanning `[t_min, 1]`.
    pub fn threshold_default(t_min: f64, count: usize) -> Result<Self> {
        Self::uniform(t_min, 1.0, count)
    }

    /// `{0.001, 0.026, ..., 0.976, 1}` used for the n-interval program.
    pub fn pair_default() -> Self {
        let mut points: Vec<f64> = (0..40).map(|i| (1 + 25 * i) as f64 / 1000.0).collect();
        points.push(1.0);
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid points admissible as cuts (strictly below 1).
    pub fn cut_candidates(&self) -> &[f64] {
        let end = self.points.partition_point(|&p| p < 1.0);
        &self.points[..end]
    }

    /// Candidate nearest to `target`, ties toward the smaller point.
    pub fn nearest_candidate(&self, target: f64) -> Option<f64> {
        let c = self.cut_candidates();
        let i = c.partition_point(|&p| p < target);
        match (i.checked_sub(1).map(|j| c[j]), c.get(i).copied()) {
            (Some(a), Some(b)) => Some(if target - a <= b - target { a } else { b }),
            (a, b) => a.or(b),
        }
    }
}

/// Largest `tau` with `mean{s0 : t <= tau} >= alpha`, smallest `tau` with
/// `mean{s1 : t >= tau} >= alpha`, both over grid cut candidates backed by
/// at least `min_support` samples.
pub fn solve_three_interval(
    store: &[EndpointSample],
    alpha: f64,
    grid: &GridSpec,
    min_support: usize,
) -> Result<Partition> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if store.is_empty() {
        return Err(Error::arg("endpoint store is empty"));
    }
    let min_support = min_support.max(1);
    let mut by_t: Vec<(f64, f64, f64)> = store.iter().map(|s| (s.t, s.s0, s.s1)).collect();
    by_t.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let n = by_t.len();
    let mut prefix0 = vec![0.0; n + 1];
    let mut suffix1 = vec![0.0; n + 1];
    for i in 0..n {
        prefix0[i + 1] = prefix0[i] + by_t[i].1;
    }
    for i in (0..n).rev() {
        suffix1[i] = suffix1[i + 1] + by_t[i].2;
    }

    let mut t1 = None;
    let mut best0 = f64::NEG_INFINITY;
    for &tau in grid.cut_candidates().iter().rev() {
        let count = by_t.partition_point(|r| r.0 <= tau);
        if count < min_support {
            continue;
        }
        let mean = prefix0[count] / count as f64;
        best0 = best0.max(mean);
        if mean >= alpha {
            t1 = Some((tau, mean));
            break;
        }
    }
    let mut t2 = None;
    let mut best1 = f64::NEG_INFINITY;
    for &tau in grid.cut_candidates() {
        let start = by_t.partition_point(|r| r.0 < tau);
        let count = n - start;
        if count < min_support {
            continue;
        }
        let mean = suffix1[start] / count as f64;
        best1 = best1.max(mean);
        if mean >= alpha {
            t2 = Some((tau, mean));
            break;
        }
    }
    let (t1, m0) = t1.ok_or(Error::Infeasible { side: Side::Lower, best_mean: best0, alpha })?;
    let (t2, m1) = t2.ok_or(Error::Infeasible { side: Side::Upper, best_mean: best1, alpha })?;
    if t1 >= t2 {
        return Err(Error::DegeneratePartition { t1, t2 });
    }
    let mut p = Partition::new(vec![t1, t2], Method::OptimalDenoiser3)?
        .echo("alpha", alpha)
        .echo("min_support", min_support)
        .echo("grid_points", grid.len())
        .echo("samples", n);
    p.achieved_means = Some([m0, m1]);
    Ok(p)
}

/// `cost[lo][hi]`: summed pair cost over pairs whose bins both lie in
/// `lo..=hi`. Bin `b` holds times in `[c_{b-1}, c_b)` for cut candidates
/// `c`, with the last bin closed at 1.
pub struct SegmentCosts {
    bins: usize,
    table: Vec<f64>,
}

impl SegmentCosts {
    pub fn build(store: &[PairSample], candidates: &[f64], objective: Objective) -> Self {
        let bins = candidates.len() + 1;
        let bin_of = |t: f64| candidates.partition_point(|&c| c <= t);
        // by_corner[a][b]: cost of pairs with min bin a and max bin b.
        let mut by_corner = vec![0.0; bins * bins];
        for s in store {
            let (a, b) = (bin_of(s.t_a), bin_of(s.t_b));
            let (lo, hi) = (a.min(b), a.max(b));
            by_corner[lo * bins + hi] += objective.cost(s.s);
        }
        // Column suffix sums turn each table entry into one addition.
        let mut table = vec![0.0; bins * bins];
        let mut col_suffix = vec![0.0; bins];
        for hi in 0..bins {
            let mut acc = 0.0;
            for a in (0..=hi).rev() {
                acc += by_corner[a * bins + hi];
                col_suffix[a] = acc;
            }
            for lo in 0..=hi {
                let left = if hi > lo { table[lo * bins + hi - 1] } else { 0.0 };
                table[lo * bins + hi] = left + col_suffix[lo];
            }
        }
        Self { bins, table }
    }

    pub fn get(&self, lo: usize, hi: usize) -> f64 {
        self.table[lo * self.bins + hi]
    }
}

/// Exact minimizer of the summed same-interval pair cost over all choices
/// of `n - 1` grid cuts. Ties go to the lexicographically smallest cuts.
pub fn solve_n_interval(store: &[PairSample], n: usize, grid: &GridSpec, objective: Objective) -> Result<Partition> {
    if n < 2 {
        return Err(Error::arg(format!("number of intervals must be at least 2, got {n}")));
    }
    let candidates = grid.cut_candidates();
    let m = candidates.len();
    if n - 1 > m {
        return Err(Error::arg(format!("{n} intervals need {} cut candidates, grid offers {m}", n - 1)));
    }
    let costs = SegmentCosts::build(store, candidates, objective);
    let last = m; // final bin index

    // best[r][i]: minimal cost covering bins i..=last with r segments.
    let mut best = vec![vec![f64::INFINITY; m + 1]; n + 1];
    for (i, slot) in best[1].iter_mut().enumerate() {
        *slot = costs.get(i, last);
    }
    for r in 2..=n {
        for i in 0..=(m + 1 - r) {
            best[r][i] = (i..=m + 1 - r).map(|e| costs.get(i, e) + best[r - 1][e + 1]).fold(f64::INFINITY, f64::min);
        }
    }

    let mut cuts = Vec::with_capacity(n - 1);
    let mut start = 0;
    for r in (2..=n).rev() {
        let target = best[r][start];
        let e = (start..=m + 1 - r)
            .find(|&e| costs.get(start, e) + best[r - 1][e + 1] == target)
            .expect("optimal split exists");
        cuts.push(candidates[e]);
        start = e + 1;
    }
    let mut p = Partition::new(cuts, Method::OptimalDenoiserN)?
        .echo("n", n)
        .echo("objective", serde_json::to_value(objective)?.as_str().unwrap_or_default())
        .echo("grid_points", grid.len())
        .echo("samples", store.len());
    p.objective_value = Some(best[n][0]);
    Ok(p)
}

/// Objective value of an explicit cut vector, evaluated pair by pair.
pub fn partition_cost(store: &[PairSample], cuts: &[f64], objective: Objective) -> f64 {
    let interval = |t: f64| cuts.partition_point(|&c| c <= t);
    store.iter().filter(|s| interval(s.t_a) == interval(s.t_b)).map(|s| objective.cost(s.s)).sum()
}

fn snapped(targets: impl Iterator<Item = f64>, grid: &GridSpec, method: Method) -> Result<Partition> {
    let cuts = targets
        .map(|t| grid.nearest_candidate(t).ok_or_else(|| Error::arg("grid has no cut candidates")))
        .collect::<Result<Vec<_>>>()?;
    Partition::new(cuts, method).map_err(|_| Error::arg("grid too coarse: snapped baseline cuts collide"))
}

/// Cuts at the grid points nearest `i / n`.
pub fn baseline_uniform_t(n: usize, grid: &GridSpec) -> Result<Partition> {
    if n < 2 {
        return Err(Error::arg(format!("number of intervals must be at least 2, got {n}")));
    }
    Ok(snapped((1..n).map(|i| i as f64 / n as f64), grid, Method::UniformT)?.echo("n", n))
}

/// Equal division of `[ln snr(1), ln snr(t_min)]`, mapped back to time and
/// snapped to the grid.
pub fn baseline_uniform_logsnr(n: usize, sched: &VpSchedule, grid: &GridSpec) -> Result<Partition> {
    if n < 2 {
        return Err(Error::arg(format!("number of intervals must be at least 2, got {n}")));
    }
    let lo = sched.snr(1.0)?.ln();
    let hi = sched.snr(sched.t_min)?.ln();
    let times =
        (1..n).map(|i| sched.t_of_snr((hi - (hi - lo) * i as f64 / n as f64).exp())).collect::<Result<Vec<_>>>()?;
    Ok(snapped(times.into_iter(), grid, Method::UniformLogSnr)?.echo("n", n))
}
