//! Intrinsic dimensionality (ID) estimation and the ID target window.
//!
//! Seven estimators are built in (CorrInt, KNN, lPCA, MADA, MLE, MoM,
//! TwoNN). They share one [`IdContext`] that computes the k-nearest-neighbour
//! lists once, and pairwise distances only when CorrInt needs them. Extra
//! estimators plug in through the [`IdEstimator`] trait.
//!
//! Distances are Euclidean on the raw features.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

/// Local estimators give up below this many usable points.
pub const MIN_USABLE_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("degenerate distances")]
    DegenerateDistances,
    #[error("needs at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("need at least 2 successful estimators, got {succeeded} (failures: {failures:?})")]
    TooFewEstimates {
        succeeded: usize,
        failures: BTreeMap<String, String>,
    },
}

/// Tuning knobs shared by the built-in estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorParams {
    /// Neighbourhood size for MLE, MADA and MoM (reduced to `n - 1` on small
    /// data).
    pub k: usize,
    /// Neighbours per point in the KNN-graph length estimator.
    pub knn_graph_k: usize,
    /// lPCA keeps eigenvalues above `lpca_alpha * lambda_max`.
    pub lpca_alpha: f64,
    /// CorrInt fits over radii between these pairwise-distance quantiles.
    pub corrint_quantiles: (f64, f64),
    pub corrint_steps: usize,
    /// Fraction of the largest TwoNN ratios discarded before the fit.
    pub twonn_discard: f64,
    /// Seed for the KNN-graph subsample order.
    pub seed: u64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams {
            k: 20,
            knn_graph_k: 20,
            lpca_alpha: 0.05,
            corrint_quantiles: (0.10, 0.50),
            corrint_steps: 10,
            twonn_discard: 0.10,
            seed: 0,
        }
    }
}

/// Built-in estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    CorrInt,
    Knn,
    Lpca,
    Mada,
    Mle,
    Mom,
    TwoNn,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::CorrInt,
        Estimator::Knn,
        Estimator::Lpca,
        Estimator::Mada,
        Estimator::Mle,
        Estimator::Mom,
        Estimator::TwoNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::CorrInt => "CorrInt",
            Estimator::Knn => "KNN",
            Estimator::Lpca => "lPCA",
            Estimator::Mada => "MADA",
            Estimator::Mle => "MLE",
            Estimator::Mom => "MoM",
            Estimator::TwoNn => "TwoNN",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Option<Estimator> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(name.trim()))
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anything that turns a dataset into an ID estimate.
pub trait IdEstimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, ctx: &IdContext<'_>) -> Result<f64, EstimateError>;
}

impl IdEstimator for Estimator {
    fn name(&self) -> &str {
        Estimator::name(*self)
    }

    fn estimate(&self, ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
        match self {
            Estimator::CorrInt => corr_int(ctx),
            Estimator::Knn => knn_graph(ctx),
            Estimator::Lpca => lpca(ctx),
            Estimator::Mada => mada(ctx),
            Estimator::Mle => mle(ctx),
            Estimator::Mom => mom(ctx),
            Estimator::TwoNn => two_nn(ctx),
        }
    }
}

/// Sorted distances from each point to its nearest neighbours (self
/// excluded), row-major `n x k`.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    pub k: usize,
    pub dist: Vec<f64>,
    pub index: Vec<usize>,
}

impl NeighborTable {
    pub fn distances(&self, i: usize) -> &[f64] {
        &self.dist[i * self.k..(i + 1) * self.k]
    }
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Brute-force k-NN over the given rows.
pub fn knn_table(rows: &[&[f64]], k: usize) -> NeighborTable {
    let n = rows.len();
    let k = k.min(n.saturating_sub(1));
    let per_row: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclid(rows[i], rows[j]), j))
                .collect();
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k > 0 && k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_by(by_dist);
            cand.into_iter().unzip()
        })
        .collect();
    let mut dist = Vec::with_capacity(n * k);
    let mut index = Vec::with_capacity(n * k);
    for (d, i) in per_row {
        dist.extend(d);
        index.extend(i);
    }
    NeighborTable { k, dist, index }
}

/// Shared, read-only structures for running several estimators on one
/// dataset.
pub struct IdContext<'a> {
    data: &'a Dataset,
    params: EstimatorParams,
    knn: OnceLock<NeighborTable>,
    pairwise: OnceLock<Vec<f64>>,
}

impl<'a> IdContext<'a> {
    pub fn new(data: &'a Dataset, params: EstimatorParams) -> Self {
        IdContext {
            data,
            params,
            knn: OnceLock::new(),
            pairwise: OnceLock::new(),
        }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Neighbourhood size actually used: `k`, capped at `n - 1`.
    pub fn k(&self) -> usize {
        self.params.k.max(2).min(self.n().saturating_sub(1))
    }

    pub fn neighbors(&self) -> &NeighborTable {
        self.knn.get_or_init(|| {
            let rows: Vec<&[f64]> = self.data.rows().collect();
            knn_table(&rows, self.k())
        })
    }

    /// All pairwise distances, sorted ascending.
    pub fn sorted_pairwise(&self) -> &[f64] {
        self.pairwise.get_or_init(|| {
            let rows: Vec<&[f64]> = self.data.rows().collect();
            let mut d: Vec<f64> = (0..rows.len())
                .into_par_iter()
                .flat_map_iter(|i| {
                    let rows = &rows;
                    ((i + 1)..rows.len()).map(move |j| euclid(rows[i], rows[j]))
                })
                .collect();
            d.par_sort_unstable_by(f64::total_cmp);
            d
        })
    }

    fn require_points(&self, min: usize) -> Result<(), EstimateError> {
        if self.n() < min {
            Err(EstimateError::TooFewPoints { n: self.n(), min })
        } else {
            Ok(())
        }
    }
}

/// Mean of the per-point values that passed, or a degeneracy error.
fn mean_of_usable(values: impl Iterator<Item = Option<f64>>) -> Result<f64, EstimateError> {
    let (sum, count) = values
        .flatten()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count < MIN_USABLE_POINTS {
        return Err(EstimateError::DegenerateDistances);
    }
    Ok(sum / count as f64)
}

fn local_min_points() -> usize {
    MIN_USABLE_POINTS
}

/// Levina–Bickel maximum likelihood, averaged over points:
/// `m(x) = [ (1/(k-1)) sum_{j<k} ln(r_k / r_j) ]^-1`.
fn mle(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    ctx.require_points(local_min_points())?;
    let nt = ctx.neighbors();
    let k = nt.k;
    mean_of_usable((0..ctx.n()).map(|i| {
        let r = nt.distances(i);
        if r[0] <= 0.0 {
            return None;
        }
        let rk = r[k - 1];
        let s: f64 = r[..k - 1].iter().map(|rj| (rk / rj).ln()).sum();
        (s > 0.0).then(|| (k - 1) as f64 / s)
    }))
}

/// Manifold-adaptive estimate `ln 2 / ln(r_k / r_ceil(k/2))`, averaged.
fn mada(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    ctx.require_points(local_min_points())?;
    let nt = ctx.neighbors();
    let k = nt.k;
    let half = k.div_ceil(2);
    mean_of_usable((0..ctx.n()).map(|i| {
        let r = nt.distances(i);
        if r[0] <= 0.0 {
            return None;
        }
        let ratio = r[k - 1] / r[half - 1];
        (ratio > 1.0).then(|| std::f64::consts::LN_2 / ratio.ln())
    }))
}

/// Method of moments: `m1 / (w - m1)` with `m1` the mean neighbour distance
/// and `w = r_k`, averaged.
fn mom(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    ctx.require_points(local_min_points())?;
    let nt = ctx.neighbors();
    let k = nt.k;
    mean_of_usable((0..ctx.n()).map(|i| {
        let r = nt.distances(i);
        if r[0] <= 0.0 {
            return None;
        }
        let w = r[k - 1];
        let m1 = r.iter().sum::<f64>() / k as f64;
        (w > m1).then(|| m1 / (w - m1))
    }))
}

/// TwoNN: regress `-ln(1 - F(mu))` on `ln mu` through the origin, with
/// `mu = r2 / r1` and the largest ratios discarded.
fn two_nn(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    ctx.require_points(local_min_points())?;
    let nt = ctx.neighbors();
    if nt.k < 2 {
        return Err(EstimateError::TooFewPoints { n: ctx.n(), min: 3 });
    }
    let mut mu: Vec<f64> = (0..ctx.n())
        .filter_map(|i| {
            let r = nt.distances(i);
            (r[0] > 0.0).then(|| r[1] / r[0])
        })
        .collect();
    if mu.len() < MIN_USABLE_POINTS {
        return Err(EstimateError::DegenerateDistances);
    }
    mu.sort_by(f64::total_cmp);
    let n = mu.len() as f64;
    let keep = ((1.0 - ctx.params.twonn_discard) * n).floor() as usize;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, m) in mu[..keep].iter().enumerate() {
        let x = m.ln();
        let y = -(1.0 - (i + 1) as f64 / n).ln();
        sxy += x * y;
        sxx += x * x;
    }
    if sxx <= 0.0 {
        return Err(EstimateError::DegenerateDistances);
    }
    Ok(sxy / sxx)
}

/// Global PCA with the Fukunaga–Olsen cut: count eigenvalues above
/// `alpha * lambda_max`.
fn lpca(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    ctx.require_points(2)?;
    let d = ctx.data();
    let (n, p) = (d.n(), d.p());
    let mut mean = vec![0.0; p];
    for r in d.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for r in d.rows() {
        for a in 0..p {
            let da = r[a] - mean[a];
            for b in a..p {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let lmax = eig.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return Err(EstimateError::DegenerateDistances);
    }
    let count = eig.iter().filter(|&&l| l > ctx.params.lpca_alpha * lmax).count();
    Ok(count as f64)
}

/// Correlation dimension: slope of `ln C(r)` against `ln r` over radii
/// log-spaced between two pairwise-distance quantiles.
fn corr_int(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    ctx.require_points(local_min_points())?;
    let d = ctx.sorted_pairwise();
    let m = d.len();
    let (qlo, qhi) = ctx.params.corrint_quantiles;
    let at = |q: f64| d[((q * (m - 1) as f64).floor() as usize).min(m - 1)];
    let (lo, hi) = (at(qlo), at(qhi));
    if !(lo > 0.0 && hi > lo) {
        return Err(EstimateError::DegenerateDistances);
    }
    let steps = ctx.params.corrint_steps.max(2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let pts: Vec<(f64, f64)> = (0..steps)
        .map(|s| {
            let lr = llo + (lhi - llo) * s as f64 / (steps - 1) as f64;
            let r = if s == 0 {
                lo
            } else if s == steps - 1 {
                hi
            } else {
                lr.exp()
            };
            let count = d.partition_point(|&x| x <= r);
            (r.ln(), (count as f64 / m as f64).ln())
        })
        .collect();
    slope(&pts).ok_or(EstimateError::DegenerateDistances)
}

/// Costa–Hero graph-length scaling: total k-NN edge length `L(n_i)` over
/// nested subsamples, `ln L = a ln n + b`, `d = 1 / (1 - a)` clamped to
/// `[1, p]`.
fn knn_graph(ctx: &IdContext<'_>) -> Result<f64, EstimateError> {
    let n = ctx.n();
    ctx.require_points(16)?;
    let d = ctx.data();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(ctx.params.seed));
    let sizes = [n / 4, n / 2, 3 * n / 4, n];
    let mut pts = Vec::with_capacity(sizes.len());
    for &s in &sizes {
        let rows: Vec<&[f64]> = order[..s].iter().map(|&i| d.row(i)).collect();
        let kg = ctx.params.knn_graph_k.max(1).min(s - 1);
        let total: f64 = knn_table(&rows, kg).dist.iter().sum();
        if total <= 0.0 {
            return Err(EstimateError::DegenerateDistances);
        }
        pts.push(((s as f64).ln(), total.ln()));
    }
    let a = slope(&pts).ok_or(EstimateError::DegenerateDistances)?;
    // Constant columns add no dimension, so they do not raise the cap.
    let varying = (0..d.p())
        .filter(|&j| d.rows().any(|r| r[j] != d.row(0)[j]))
        .count();
    let cap = varying.max(1) as f64;
    let est = if a >= 1.0 { cap } else { 1.0 / (1.0 - a) };
    Ok(est.clamp(1.0, cap))
}

/// Least-squares slope of `y` on `x`.
fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let s = sxy / sxx;
    (sxx > 0.0 && s.is_finite()).then_some(s)
}

/// Runs a single estimator on `d`.
pub fn estimate_id(
    d: &Dataset,
    method: &dyn IdEstimator,
    params: &EstimatorParams,
) -> Result<f64, EstimateError> {
    method.estimate(&IdContext::new(d, params.clone()))
}

/// The real-valued window `[min, max]` models are matched against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdWindow {
    pub min: f64,
    pub max: f64,
}

impl IdWindow {
    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    /// Distance from `x` to the interval; 0 inside.
    pub fn distance(&self, x: f64) -> f64 {
        if x < self.min {
            self.min - x
        } else if x > self.max {
            x - self.max
        } else {
            0.0
        }
    }
}

/// Per-estimator ID values and the derived window
/// `[max(0, mean - sd), mean + sd]` (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdProfile {
    pub estimates: BTreeMap<String, f64>,
    pub failures: BTreeMap<String, String>,
    pub id_mean: f64,
    pub id_stdev: f64,
    pub id_min: f64,
    pub id_max: f64,
}

impl IdProfile {
    /// Builds the profile from already computed values.
    pub fn from_estimates(
        estimates: BTreeMap<String, f64>,
        failures: BTreeMap<String, String>,
    ) -> Result<Self, ProfileError> {
        if estimates.len() < 2 {
            return Err(ProfileError::TooFewEstimates {
                succeeded: estimates.len(),
                failures,
            });
        }
        let n = estimates.len() as f64;
        let mean = estimates.values().sum::<f64>() / n;
        let var = estimates.values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        Ok(IdProfile {
            estimates,
            failures,
            id_mean: mean,
            id_stdev: sd,
            id_min: (mean - sd).max(0.0),
            id_max: mean + sd,
        })
    }

    pub fn window(&self) -> IdWindow {
        IdWindow {
            min: self.id_min,
            max: self.id_max,
        }
    }
}

/// Runs every estimator, records failures and aggregates the successes.
pub fn id_profile(
    d: &Dataset,
    methods: &[&dyn IdEstimator],
    params: &EstimatorParams,
) -> Result<IdProfile, ProfileError> {
    let ctx = IdContext::new(d, params.clone());
    let mut estimates = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for m in methods {
        match m.estimate(&ctx) {
            Ok(v) if v.is_finite() && v > 0.0 => {
                estimates.insert(m.name().to_string(), v);
            }
            Ok(v) => {
                failures.insert(m.name().to_string(), format!("non-positive estimate {v}"));
            }
            Err(e) => {
                failures.insert(m.name().to_string(), e.to_string());
            }
        }
    }
    IdProfile::from_estimates(estimates, failures)
}

/// [`id_profile`] over built-in estimators.
pub fn id_profile_builtin(
    d: &Dataset,
    methods: &[Estimator],
    params: &EstimatorParams,
) -> Result<IdProfile, ProfileError> {
    let dyns: Vec<&dyn IdEstimator> = methods.iter().map(|m| m as &dyn IdEstimator).collect();
    id_profile(d, &dyns, params)
}

/// Parses a comma-separated estimator list; `all` selects every built-in.
pub fn parse_estimators(list: &str) -> Result<Vec<Estimator>, EstimateError> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Estimator::ALL.to_vec());
    }
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Estimator::from_name(s).ok_or_else(|| EstimateError::UnknownEstimator(s.trim().into())))
        .collect()
}
