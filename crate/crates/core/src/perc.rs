//! Percolation and quick-path diagnostics: chemical distances through
//! trap-thresholded landscapes, closed *-cluster statistics, and the
//! one-dimensional coarse-graining construction.

use crate::env::{Environment, TrapParams};
use crate::lattice::{l1_dist, linf_dist, Site};
use crate::rng::{self, tag};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PercError {
    #[error("site {0:?} outside the environment box")]
    OutsideBox(Site),
    #[error("open probability q = {0} outside the valid range ({1}, 1)")]
    BadOpenProbability(f64, f64),
    #[error("coarse-graining constraints violated: need 0 < d1 < d2, c1 > 1, c1^2 < 1 + d2, 1 + d1 < (1 + d2)/c1^2")]
    BadCoarseGrainParams,
    #[error("g_sigma is not available for the constant trap family")]
    NoTailFunction,
    #[error("sigma_t must satisfy loglog sigma_t > 0 (sigma_t > e), got {0}")]
    SigmaTooSmall(f64),
    #[error("coarse-graining postcondition failed: {0}")]
    PostconditionFailed(String),
    #[error("cluster exploration exceeded {0} sites; q too far below 1")]
    ClusterBudget(usize),
    #[error("quick-path weights need a d = 1 path")]
    NotOneDimensional,
}

/// Site-percolation view of an environment: a site is open when its trap
/// value is at most `sigma_thresh` and it is not within l1 distance `guard`
/// of the avoid set.
pub struct ThresholdGraph<'a> {
    env: &'a Environment,
    open: Vec<bool>,
}

impl<'a> ThresholdGraph<'a> {
    pub fn new(env: &'a Environment, sigma_thresh: f64, avoid: &[Site], guard: u64) -> Self {
        let n = env.spec.site_count();
        let mut open = vec![false; n];
        for i in 0..n {
            open[i] = env.sigma[i] <= sigma_thresh;
        }
        if !avoid.is_empty() {
            for i in 0..n {
                if !open[i] {
                    continue;
                }
                let z = env.spec.site_at(i);
                if avoid.iter().any(|s| l1_dist(&z, s) <= guard) {
                    open[i] = false;
                }
            }
        }
        ThresholdGraph { env, open }
    }

    pub fn is_open(&self, z: &[i64]) -> bool {
        self.env.spec.index_of(z).map(|i| self.open[i]).unwrap_or(false)
    }

    fn bfs(&self, from: usize) -> Vec<u32> {
        let n = self.env.spec.site_count();
        let mut dist = vec![u32::MAX; n];
        if !self.open[from] {
            return dist;
        }
        let mut frontier = vec![from];
        dist[from] = 0;
        let mut level = 0u32;
        while !frontier.is_empty() {
            level += 1;
            let mut next = Vec::new();
            for &i in &frontier {
                let z = self.env.spec.site_at(i);
                for y in self.env.spec.neighbors_in_box(&z) {
                    let j = self.env.spec.index_of(&y).unwrap();
                    if self.open[j] && dist[j] == u32::MAX {
                        dist[j] = level;
                        next.push(j);
                    }
                }
            }
            frontier = next;
        }
        dist
    }
}

/// Shortest open-path length between two sites; `None` when disconnected
/// (including closed endpoints).
pub fn chemical_distance(
    graph: &ThresholdGraph,
    u: &[i64],
    v: &[i64],
) -> Result<Option<u64>, PercError> {
    let iu = graph
        .env
        .spec
        .index_of(u)
        .ok_or_else(|| PercError::OutsideBox(u.to_vec()))?;
    let iv = graph
        .env
        .spec
        .index_of(v)
        .ok_or_else(|| PercError::OutsideBox(v.to_vec()))?;
    let dist = graph.bfs(iu);
    Ok((dist[iv] != u32::MAX).then_some(dist[iv] as u64))
}

/// Shortest open-path length from `u` to any site of the target set.
pub fn chemical_distance_to_set(
    graph: &ThresholdGraph,
    u: &[i64],
    targets: &[Site],
) -> Result<Option<u64>, PercError> {
    let iu = graph
        .env
        .spec
        .index_of(u)
        .ok_or_else(|| PercError::OutsideBox(u.to_vec()))?;
    let dist = graph.bfs(iu);
    let mut best: Option<u64> = None;
    for t in targets {
        let it = graph
            .env
            .spec
            .index_of(t)
            .ok_or_else(|| PercError::OutsideBox(t.to_vec()))?;
        if dist[it] != u32::MAX {
            best = Some(best.map_or(dist[it] as u64, |b| b.min(dist[it] as u64)));
        }
    }
    Ok(best)
}

const CLUSTER_BUDGET: usize = 1_000_000;

/// Size of the closed *-cluster (l-infinity adjacency) containing the origin,
/// with the origin conditioned closed and every other site closed
/// independently with probability 1 - q. Fresh field per (seed, sample).
fn closed_star_cluster_size(q: f64, d: usize, seed: u64, sample: u64) -> Result<usize, PercError> {
    let mut visited = std::collections::HashSet::new();
    let origin = vec![0i64; d];
    visited.insert(origin.clone());
    let mut stack = vec![origin];
    let mut size = 0usize;
    while let Some(z) = stack.pop() {
        size += 1;
        if size > CLUSTER_BUDGET {
            return Err(PercError::ClusterBudget(CLUSTER_BUDGET));
        }
        for y in star_neighbors(&z) {
            if visited.contains(&y) {
                continue;
            }
            let mut words = vec![sample];
            words.extend(y.iter().map(|&c| c as u64));
            let u = rng::u64_to_open01(rng::hash_words(seed ^ tag::PERC, &words));
            visited.insert(y.clone());
            if u > q {
                stack.push(y);
            }
        }
    }
    Ok(size)
}

fn star_neighbors(z: &[i64]) -> Vec<Site> {
    let d = z.len();
    let count = 3usize.pow(d as u32);
    let mut out = Vec::with_capacity(count - 1);
    for code in 0..count {
        let mut y = z.to_vec();
        let mut v = code;
        let mut all_zero = true;
        for c in y.iter_mut() {
            let off = (v % 3) as i64 - 1;
            v /= 3;
            *c += off;
            all_zero &= off == 0;
        }
        if !all_zero {
            out.push(y);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub mean: f64,
    pub std_error: f64,
    pub max_observed: usize,
    pub samples: u64,
    /// Printed upper bound on the mean: (1 - 3^d (1 - q))^{-1}.
    pub mean_bound: f64,
}

/// Monte Carlo statistics of closed *-cluster sizes at conditioned-closed
/// seed sites. Valid for q in (1 - (3d)^{-1}, 1).
pub fn cluster_stats(q: f64, d: usize, samples: u64, seed: u64) -> Result<ClusterStats, PercError> {
    let q_min = 1.0 - 1.0 / (3.0 * d as f64);
    if !(q > q_min && q < 1.0) {
        return Err(PercError::BadOpenProbability(q, q_min));
    }
    let sizes: Vec<usize> = crate::parallel::map_indexed(samples as usize, |s| {
        closed_star_cluster_size(q, d, seed, s as u64).unwrap_or(usize::MAX)
    });
    if sizes.iter().any(|&s| s == usize::MAX) {
        return Err(PercError::ClusterBudget(CLUSTER_BUDGET));
    }
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let (mean, se) = crate::stats::mean_se(&xs);
    Ok(ClusterStats {
        mean,
        std_error: se,
        max_observed: sizes.into_iter().max().unwrap_or(0),
        samples,
        mean_bound: 1.0 / (1.0 - 3f64.powi(d as i32) * (1.0 - q)),
    })
}

/// Empirical P(max of m cluster sizes >= x) over independent trials, with
/// its binomial standard error.
pub fn max_cluster_exceedance(
    q: f64,
    d: usize,
    m: u64,
    x: usize,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), PercError> {
    let q_min = 1.0 - 1.0 / (3.0 * d as f64);
    if !(q > q_min && q < 1.0) {
        return Err(PercError::BadOpenProbability(q, q_min));
    }
    let hits: Vec<f64> = crate::parallel::map_indexed(trials as usize, |t| {
        for k in 0..m {
            let sample = (t as u64) * m + k;
            match closed_star_cluster_size(q, d, seed, sample) {
                Ok(s) if s >= x => return 1.0,
                Ok(_) => {}
                Err(_) => return 1.0,
            }
        }
        0.0
    });
    let (p, se) = crate::stats::mean_se(&hits);
    Ok((p, se))
}

/// Coarse-graining scales for the d = 1 quick-path analysis.
#[derive(Debug, Clone)]
pub struct CoarseGrainScales {
    pub delta1: f64,
    pub delta2: f64,
    pub c1: f64,
    /// sigma^0 = 0 followed by the increasing scales up to sigma^{I_t}.
    pub scales: Vec<f64>,
}

impl CoarseGrainScales {
    pub fn i_t(&self) -> usize {
        self.scales.len() - 1
    }
}

/// Build the scales: loglog ratios fixed at 1 + delta1, final step 1 + delta2,
/// I_t maximal with g(sigma^{I_t - 1}) <= log(n_t)/c1.
pub fn coarse_grain_scales(
    n_t: f64,
    sigma_t: f64,
    trap: &TrapParams,
    delta1: f64,
    delta2: f64,
    c1: f64,
) -> Result<CoarseGrainScales, PercError> {
    if !(delta1 > 0.0 && delta1 < delta2 && c1 > 1.0) {
        return Err(PercError::BadCoarseGrainParams);
    }
    if !(c1 * c1 < 1.0 + delta2 && 1.0 + delta1 < (1.0 + delta2) / (c1 * c1)) {
        return Err(PercError::BadCoarseGrainParams);
    }
    if trap.g_sigma(1.0).is_none() {
        return Err(PercError::NoTailFunction);
    }
    if !(sigma_t > std::f64::consts::E) {
        return Err(PercError::SigmaTooSmall(sigma_t));
    }
    let g = |x: f64| trap.g_sigma(x).unwrap();
    let lo_threshold = n_t.ln() / c1;
    let hi_threshold = c1 * n_t.ln();
    let from_loglog = |ll: f64| (ll.exp()).exp();

    // bar sigma^i: loglog grows geometrically with ratio 1 + delta1
    let mut bars = vec![0.0f64];
    let mut ll = (1.0 + delta1) * sigma_t.ln().ln();
    loop {
        let s = from_loglog(ll);
        if g(s) > lo_threshold {
            break;
        }
        bars.push(s);
        ll *= 1.0 + delta1;
        if bars.len() > 10_000 {
            return Err(PercError::PostconditionFailed(
                "scale sequence did not terminate".into(),
            ));
        }
    }
    // I_t is the maximum index with g(sigma^{I_t - 1}) <= threshold; the bars
    // vector holds sigma^0 .. sigma^{I_t - 1}
    let i_t = bars.len();
    let last_ll = if i_t > 1 {
        (1.0 + delta2) * bars[i_t - 1].ln().ln()
    } else {
        (1.0 + delta2) * sigma_t.ln().ln()
    };
    let top = from_loglog(last_ll);
    if g(top) < hi_threshold {
        return Err(PercError::PostconditionFailed(format!(
            "g(sigma^I) = {} below c1 log n_t = {}",
            g(top),
            hi_threshold
        )));
    }
    let mut scales = bars;
    scales.push(top);
    // verify condition (a) on the constructed sequence
    for i in 1..scales.len() {
        let prev_ll = if i == 1 { sigma_t.ln().ln() } else { scales[i - 1].ln().ln() };
        let ratio = scales[i].ln().ln() / prev_ll;
        if !(ratio >= 1.0 + delta1 - 1e-9 && ratio <= 1.0 + delta2 + 1e-9) {
            return Err(PercError::PostconditionFailed(format!(
                "loglog ratio {ratio} at step {i} outside [1+d1, 1+d2]"
            )));
        }
    }
    Ok(CoarseGrainScales { delta1, delta2, c1, scales })
}

#[derive(Debug, Clone)]
pub struct QuickPathWeight {
    /// N_i = number of path sites with sigma in (sigma^{i-1}, sigma^i].
    pub counts: Vec<u64>,
    /// sum_i N_i log sigma^i.
    pub weighted_sum: f64,
    /// Path sites with sigma above the top scale (reported, not an error).
    pub overflow: u64,
}

/// Bin the trap values along a d = 1 path into the coarse-graining scales.
/// Terminal site excluded, as only departures cost holding time.
pub fn quick_path_weight(
    env: &Environment,
    path: &[Site],
    scales: &CoarseGrainScales,
) -> Result<QuickPathWeight, PercError> {
    if env.spec.d != 1 {
        return Err(PercError::NotOneDimensional);
    }
    let bins = &scales.scales;
    let mut counts = vec![0u64; bins.len() - 1];
    let mut overflow = 0u64;
    let upto = path.len().saturating_sub(1);
    for site in &path[..upto] {
        let s = env
            .sigma_at(site)
            .ok_or_else(|| PercError::OutsideBox(site.clone()))?;
        if s > bins[bins.len() - 1] {
            overflow += 1;
            continue;
        }
        for i in 1..bins.len() {
            if s > bins[i - 1] && s <= bins[i] {
                counts[i - 1] += 1;
                break;
            }
        }
    }
    let weighted_sum = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| n as f64 * bins[i + 1].ln())
        .sum();
    Ok(QuickPathWeight { counts, weighted_sum, overflow })
}

/// The proposition's bound n_t max{(log sigma_t)^2, loglog n_t / loglog sigma_t}.
pub fn quick_path_bound(n_t: f64, sigma_t: f64) -> f64 {
    let a = sigma_t.ln().powi(2);
    let b = n_t.ln().ln() / sigma_t.ln().ln();
    n_t * a.max(b)
}

/// Check the *-adjacency definition.
pub fn is_star_adjacent(a: &[i64], b: &[i64]) -> bool {
    a != b && linf_dist(a, b) == 1
}
