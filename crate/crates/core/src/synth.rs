//! Synthetic data: planted-function regression problems and points on
//! linearly embedded manifolds.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::expr::StackModel;

/// Generating function of a planted problem (zero-based feature indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// `x0 * x1 + sin(x2)`
    ProductSine,
    /// `x0`
    Identity,
    /// `x0^2 + ... + x{k-1}^2`
    SumSquares(usize),
    /// Any stack model.
    Model(StackModel),
}

impl Formula {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Formula::ProductSine => x[0] * x[1] + x[2].sin(),
            Formula::Identity => x[0],
            Formula::SumSquares(k) => x[..*k].iter().map(|v| v * v).sum(),
            Formula::Model(m) => m.evaluate(x),
        }
    }

    /// Features the formula needs.
    pub fn min_features(&self) -> usize {
        match self {
            Formula::ProductSine => 3,
            Formula::Identity => 1,
            Formula::SumSquares(k) => *k,
            Formula::Model(m) => m.max_feature().map_or(0, |i| i + 1),
        }
    }
}

impl FromStr for Formula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(k) = s.strip_prefix("sum-squares-") {
            return k
                .parse()
                .map(Formula::SumSquares)
                .map_err(|_| format!("bad sum-squares count in {s:?}"));
        }
        match s {
            "product-sine" => Ok(Formula::ProductSine),
            "identity" => Ok(Formula::Identity),
            _ if s.starts_with('{') => serde_json::from_str::<StackModel>(s)
                .map(Formula::Model)
                .map_err(|e| format!("bad model JSON: {e}")),
            _ => Err(format!(
                "unknown formula {s:?} (expected product-sine, identity, sum-squares-<k> or model JSON)"
            )),
        }
    }
}

/// Recipe for a planted regression problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedSpec {
    pub n: usize,
    pub p: usize,
    /// When set, only this many features are drawn independently; the rest
    /// are fixed random linear combinations of them, so the inputs lie on a
    /// `latent_dim`-dimensional subspace.
    pub latent_dim: Option<usize>,
    /// Inputs are uniform on `[low, high]`.
    pub range: (f64, f64),
    /// Gaussian noise standard deviation, relative to the clean target's.
    pub noise: f64,
    pub formula: Formula,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n: 200,
            p: 5,
            latent_dim: None,
            range: (-2.0, 2.0),
            noise: 0.0,
            formula: Formula::ProductSine,
            seed: 0,
        }
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Samples a planted problem.
pub fn planted_dataset(spec: &PlantedSpec) -> Dataset {
    assert!(
        spec.p >= spec.formula.min_features().max(1),
        "formula needs at least {} features",
        spec.formula.min_features()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = spec.latent_dim.unwrap_or(spec.p).clamp(1, spec.p);
    // Extra features mix the free ones with weights in [-1, 1].
    let mix: Vec<Vec<f64>> = (q..spec.p)
        .map(|_| (0..q).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let (lo, hi) = spec.range;
    let rows: Vec<Vec<f64>> = (0..spec.n)
        .map(|_| {
            let mut x: Vec<f64> = (0..q).map(|_| rng.random_range(lo..hi)).collect();
            for w in &mix {
                let v = w.iter().zip(&x[..q]).map(|(a, b)| a * b).sum();
                x.push(v);
            }
            x
        })
        .collect();
    let clean: Vec<f64> = rows.iter().map(|r| spec.formula.eval(r)).collect();
    let sd = std_dev(&clean);
    let y = clean
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + spec.noise * sd * e
        })
        .collect();
    Dataset::from_rows("planted", &rows, y).expect("generated data is finite")
}

/// `n` points uniform on the unit cube `[0,1]^intrinsic`, mapped into
/// `R^ambient` by a random orthonormal frame, plus isotropic Gaussian
/// jitter. The target column is zero.
pub fn embedded_cube(n: usize, intrinsic: usize, ambient: usize, jitter: f64, seed: u64) -> Dataset {
    assert!(intrinsic >= 1 && intrinsic <= ambient);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(ambient, intrinsic, |_, _| StandardNormal.sample(&mut rng));
    let frame = g.qr().q();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..intrinsic).map(|_| rng.random::<f64>()).collect();
            (0..ambient)
                .map(|r| {
                    let v: f64 = (0..intrinsic).map(|c| frame[(r, c)] * z[c]).sum();
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + jitter * e
                })
                .collect()
        })
        .collect();
    Dataset::from_rows("embedded_cube", &rows, vec![0.0; n]).expect("generated data is finite")
}
