//! Effective dimensionality (ED) of a model: the rank of its finite-difference
//! Hessian averaged over a handful of input points.
//!
//! By default the Hessian is sampled at the three strategic rows of the data
//! (minimum, nearest-to-mean and maximum target). The signed Hessians are
//! averaged as-is, so opposite curvature at different points can cancel; the
//! per-point ranks are kept in [`HessianEstimate::point_ranks`] to make that
//! visible.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dataset::{strategic_points, Dataset};
use crate::expr::{Operand, StackModel};

pub type Matrix = DMatrix<f64>;

/// Relative rank threshold, as a fraction of the largest singular value.
pub const RELATIVE_TOLERANCE: f64 = 1e-6;
/// Absolute rank threshold.
pub const ABSOLUTE_TOLERANCE: f64 = 1e-8;
/// Multiplier on `eps * |f| / h^2`, the round-off level of a second difference.
pub const NOISE_FACTOR: f64 = 100.0;

/// Finite-difference step for coordinate value `xi`.
pub fn step_size(xi: f64) -> f64 {
    f64::EPSILON.powf(0.25) * xi.abs().max(1.0)
}

/// Hessian at a single point plus the bookkeeping needed for rank decisions.
#[derive(Debug, Clone)]
pub struct PointHessian {
    /// Symmetrized `p x p` Hessian.
    pub matrix: Matrix,
    /// Entries zeroed because a stencil evaluation was non-finite.
    pub entry_failures: usize,
    /// Estimated round-off level of the entries.
    pub noise_floor: f64,
}

/// Central-difference Hessian of `m` at `x`.
///
/// Diagonal: `[f(x+h_i) - 2f(x) + f(x-h_i)] / h_i^2`. Off-diagonal uses the
/// four-point cross stencil over `4 h_i h_j`. Non-finite entries are set to
/// zero and counted.
pub fn numerical_hessian(m: &StackModel, x: &[f64]) -> PointHessian {
    let p = x.len();
    let h: Vec<f64> = x.iter().map(|&xi| step_size(xi)).collect();
    let mut scratch = Vec::with_capacity(m.operands().len());
    let mut probe = x.to_vec();
    let mut f_scale = 0.0f64;
    let mut eval = |probe: &[f64], f_scale: &mut f64| {
        let v = m.evaluate_with(probe, &mut scratch);
        if v.is_finite() {
            *f_scale = f_scale.max(v.abs());
        }
        v
    };

    let f0 = eval(&probe, &mut f_scale);
    let mut matrix = Matrix::zeros(p, p);
    let mut failures = 0;

    for i in 0..p {
        probe[i] = x[i] + h[i];
        let fp = eval(&probe, &mut f_scale);
        probe[i] = x[i] - h[i];
        let fm = eval(&probe, &mut f_scale);
        probe[i] = x[i];
        let v = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        if v.is_finite() {
            matrix[(i, i)] = v;
        } else {
            failures += 1;
        }
    }

    for i in 0..p {
        for j in (i + 1)..p {
            let mut corner = |si: f64, sj: f64, f_scale: &mut f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = eval(&probe, f_scale);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0, &mut f_scale);
            let fpm = corner(1.0, -1.0, &mut f_scale);
            let fmp = corner(-1.0, 1.0, &mut f_scale);
            let fmm = corner(-1.0, -1.0, &mut f_scale);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            if v.is_finite() {
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            } else {
                failures += 2;
            }
        }
    }

    // The stencil writes both triangles with the same value, but keep the
    // explicit symmetrization so callers never see an asymmetric matrix.
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    // Columns the model never reads give exact zeros, so only the steps of
    // features it reads set the round-off level.
    let h_min = m
        .operands()
        .iter()
        .filter_map(|o| match *o {
            Operand::Feature(i) if i < p => Some(h[i]),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let noise_floor = if h_min.is_finite() {
        NOISE_FACTOR * f64::EPSILON * f_scale / (h_min * h_min)
    } else {
        0.0
    };
    PointHessian {
        matrix,
        entry_failures: failures,
        noise_floor,
    }
}

/// Singular values (descending) of a matrix.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().map(|s| s.abs()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Rank under `tau = max(1e-6 * sigma_max, 1e-8)`.
pub fn rank_with_tolerance(m: &Matrix) -> (usize, Vec<f64>) {
    rank_with_floor(m, 0.0)
}

/// Rank with an extra lower bound on the threshold, used to keep
/// finite-difference round-off from registering as curvature.
pub fn rank_with_floor(m: &Matrix, floor: f64) -> (usize, Vec<f64>) {
    let sv = singular_values(m);
    let tau = threshold(&sv, floor);
    let rank = sv.iter().filter(|&&s| s > tau).count();
    (rank, sv)
}

fn threshold(sv: &[f64], floor: f64) -> f64 {
    let s_max = sv.first().copied().unwrap_or(0.0);
    (RELATIVE_TOLERANCE * s_max).max(ABSOLUTE_TOLERANCE).max(floor)
}

/// Averaged-Hessian rank and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianEstimate {
    /// Averaged, symmetric Hessian, row by row.
    pub h_bar: Vec<Vec<f64>>,
    pub points_used: usize,
    pub entry_failures: usize,
    pub singular_values: Vec<f64>,
    pub ed: usize,
    /// Threshold the singular values were compared against.
    pub tolerance: f64,
    /// Rank of each individual point Hessian.
    pub point_ranks: Vec<usize>,
    /// Dataset rows the Hessian was sampled at.
    pub row_indices: Vec<usize>,
}

/// ED from the Hessians at the given points, averaged in order.
pub fn effective_dimensionality_at(m: &StackModel, points: &[&[f64]]) -> HessianEstimate {
    let p = points.first().map_or(0, |x| x.len());
    let mut sum = Matrix::zeros(p, p);
    let mut failures = 0;
    let mut floor_sum = 0.0;
    let mut point_ranks = Vec::with_capacity(points.len());
    for x in points {
        let ph = numerical_hessian(m, x);
        point_ranks.push(rank_with_floor(&ph.matrix, ph.noise_floor).0);
        sum += &ph.matrix;
        failures += ph.entry_failures;
        floor_sum += ph.noise_floor;
    }
    let count = points.len().max(1) as f64;
    let h_bar = sum / count;
    // The round-off in an average is bounded by the average round-off.
    let floor = floor_sum / count;
    let (ed, singular_values) = rank_with_floor(&h_bar, floor);
    let tolerance = threshold(&singular_values, floor);
    HessianEstimate {
        h_bar: h_bar.row_iter().map(|r| r.iter().copied().collect()).collect(),
        points_used: points.len(),
        entry_failures: failures,
        singular_values,
        ed,
        tolerance,
        point_ranks,
        row_indices: Vec::new(),
    }
}

/// ED sampled at the three strategic points of `d`.
pub fn effective_dimensionality(m: &StackModel, d: &Dataset) -> HessianEstimate {
    // A Dataset always has at least one row.
    let sp = strategic_points(d).expect("dataset is non-empty");
    let mut est = effective_dimensionality_at(m, &sp.points());
    est.row_indices = sp.row_indices.to_vec();
    est
}

/// ED averaged over `n_points` random rows: without replacement when
/// `n_points <= n`, with replacement otherwise.
pub fn effective_dimensionality_random(
    m: &StackModel,
    d: &Dataset,
    n_points: usize,
    seed: u64,
) -> HessianEstimate {
    let rows = sample_rows(d.n(), n_points.max(1), seed);
    let points: Vec<&[f64]> = rows.iter().map(|&i| d.row(i)).collect();
    let mut est = effective_dimensionality_at(m, &points);
    est.row_indices = rows;
    est
}

/// Row indices used by [`effective_dimensionality_random`].
pub fn sample_rows(n: usize, n_points: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n_points <= n {
        index::sample(&mut rng, n, n_points).into_vec()
    } else {
        (0..n_points).map(|_| rng.random_range(0..n)).collect()
    }
}

/// One model's strategic-point ED next to its random-point ED.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingComparison {
    pub strategic_ed: usize,
    pub random_ed: usize,
}

impl SamplingComparison {
    pub fn difference(&self) -> i64 {
        self.strategic_ed as i64 - self.random_ed as i64
    }
}

/// Agreement between the 3-point strategy and dense random sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingValidation {
    pub n_points: usize,
    pub models: Vec<SamplingComparison>,
    /// Count of models per `strategic_ed - random_ed`.
    pub histogram: BTreeMap<i64, usize>,
    pub exact_rate: f64,
    pub within_one_rate: f64,
}

/// Compares [`effective_dimensionality`] with
/// [`effective_dimensionality_random`] for every model. Model `i` uses seed
/// `seed + i`, so results do not depend on `parallel`.
pub fn validate_sampling(
    models: &[StackModel],
    d: &Dataset,
    n_points: usize,
    seed: u64,
    parallel: bool,
) -> SamplingValidation {
    let compare = |(i, m): (usize, &StackModel)| SamplingComparison {
        strategic_ed: effective_dimensionality(m, d).ed,
        random_ed: effective_dimensionality_random(m, d, n_points, seed.wrapping_add(i as u64)).ed,
    };
    let comparisons: Vec<SamplingComparison> = if parallel {
        models.par_iter().enumerate().map(compare).collect()
    } else {
        models.iter().enumerate().map(compare).collect()
    };
    let mut histogram = BTreeMap::new();
    for c in &comparisons {
        *histogram.entry(c.difference()).or_insert(0) += 1;
    }
    let total = comparisons.len().max(1) as f64;
    let exact = comparisons.iter().filter(|c| c.difference() == 0).count();
    let close = comparisons.iter().filter(|c| c.difference().abs() <= 1).count();
    SamplingValidation {
        n_points,
        models: comparisons,
        histogram,
        exact_rate: exact as f64 / total,
        within_one_rate: close as f64 / total,
    }
}
