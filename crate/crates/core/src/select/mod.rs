//! Banded model selection against the ID window, and the per-band
//! performance report.
//!
//! A model is *Ideal* when its ED lies inside `[id_min, id_max]`, *Close*
//! when it is within one unit of the window, and *Far* otherwise.

pub mod mann_whitney;

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::evolve::{fitness, ScoredModel};
use crate::expr::{ModelError, StackModel};
use crate::hessian_ed::effective_dimensionality;
use crate::intrinsic_dim::{IdProfile, IdWindow};

pub use mann_whitney::{mann_whitney_u, MannWhitney};

/// Maximum distance from the window for the Close band.
pub const CLOSE_DISTANCE: f64 = 1.0;
/// Significance level for the pairwise band comparisons.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("Pareto front is empty")]
    EmptyFront,
    #[error("Mann-Whitney test needs two non-empty samples")]
    EmptySample,
    #[error("model {index}: {source}")]
    Model {
        index: usize,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Ideal,
    Close,
    Far,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Ideal, Band::Close, Band::Far];
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Ideal => "Ideal",
            Band::Close => "Close",
            Band::Far => "Far",
        })
    }
}

pub fn classify_in_window(ed: usize, window: &IdWindow) -> Band {
    let d = window.distance(ed as f64);
    if d == 0.0 {
        Band::Ideal
    } else if d <= CLOSE_DISTANCE {
        Band::Close
    } else {
        Band::Far
    }
}

pub fn classify_band(ed: usize, profile: &IdProfile) -> Band {
    classify_in_window(ed, &profile.window())
}

/// Fills in `ed` for every model that lacks one, sampling the Hessian at the
/// strategic points of `d`. Identical genotypes are measured once.
pub fn annotate_ed(models: &mut [ScoredModel], d: &Dataset) -> Result<(), SelectError> {
    let mut cache: HashMap<StackModel, usize> = HashMap::new();
    for (index, m) in models.iter_mut().enumerate() {
        if m.ed.is_some() {
            continue;
        }
        m.model
            .check_features(d.p())
            .map_err(|source| SelectError::Model { index, source })?;
        let ed = *cache
            .entry(m.model.clone())
            .or_insert_with(|| effective_dimensionality(&m.model, d).ed);
        m.ed = Some(ed);
    }
    Ok(())
}

/// Outcome of [`select_models`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub window: IdWindow,
    /// Band the returned models come from; `None` when nothing qualified.
    pub band: Option<Band>,
    pub models: Vec<ScoredModel>,
    /// Set when the Ideal band was empty.
    pub flag: Option<String>,
}

pub const FLAG_CLOSE_FALLBACK: &str = "no models in Ideal; returning Close";
pub const FLAG_EMPTY: &str = "no models in Ideal or Close";

/// Front members whose ED falls inside the ID window, in front order. Falls
/// back to the Close band (flagged) when no model is Ideal.
pub fn select_models(
    front: &[ScoredModel],
    profile: &IdProfile,
    d: &Dataset,
) -> Result<Selection, SelectError> {
    if front.is_empty() {
        return Err(SelectError::EmptyFront);
    }
    let mut annotated = front.to_vec();
    annotate_ed(&mut annotated, d)?;
    let window = profile.window();
    let in_band = |band: Band| -> Vec<ScoredModel> {
        annotated
            .iter()
            .filter(|m| classify_in_window(m.ed.unwrap(), &window) == band)
            .cloned()
            .collect()
    };
    let ideal = in_band(Band::Ideal);
    if !ideal.is_empty() {
        return Ok(Selection {
            window,
            band: Some(Band::Ideal),
            models: ideal,
            flag: None,
        });
    }
    let close = in_band(Band::Close);
    if !close.is_empty() {
        return Ok(Selection {
            window,
            band: Some(Band::Close),
            models: close,
            flag: Some(FLAG_CLOSE_FALLBACK.to_string()),
        });
    }
    Ok(Selection {
        window,
        band: None,
        models: Vec::new(),
        flag: Some(FLAG_EMPTY.to_string()),
    })
}

/// Min-max normalization to `[0, 1]`; all-equal inputs map to 0.
pub fn min_max_normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

/// Bootstrap standard error of the median.
pub fn bootstrap_median_se(v: &[f64], resamples: usize, seed: u64) -> Option<f64> {
    if v.is_empty() || resamples < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; v.len()];
    let medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = v[rng.random_range(0..v.len())];
            }
            median(&buf).unwrap()
        })
        .collect();
    let mean = medians.iter().sum::<f64>() / resamples as f64;
    let var = medians.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (resamples - 1) as f64;
    Some(var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub significance: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            bootstrap_resamples: 1000,
            seed: 0,
            significance: SIGNIFICANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    /// Position in the front.
    pub model_id: usize,
    pub ed: usize,
    pub band: Band,
    pub train_fitness: f64,
    pub test_fitness: f64,
    pub normalized_test_fitness: f64,
    pub size: usize,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAggregate {
    pub band: Band,
    pub count: usize,
    pub median_normalized_fitness: Option<f64>,
    pub median_standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandComparison {
    pub first: Band,
    pub second: Band,
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
    pub significant: bool,
}

/// Per-model band rows, per-band aggregates and pairwise Mann–Whitney tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub window: IdWindow,
    pub rows: Vec<BandRow>,
    pub bands: Vec<BandAggregate>,
    /// Only pairs where both bands are populated.
    pub comparisons: Vec<BandComparison>,
}

impl BandReport {
    pub fn aggregate(&self, band: Band) -> &BandAggregate {
        self.bands.iter().find(|a| a.band == band).expect("all bands present")
    }

    pub fn normalized_fitness(&self, band: Band) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.band == band)
            .map(|r| r.normalized_test_fitness)
            .collect()
    }

    /// Rows as CSV (one line per front model).
    pub fn rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }

    /// Band aggregates as CSV.
    pub fn bands_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["band", "count", "median_normalized_fitness", "median_standard_error"])
            .expect("in-memory CSV write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for a in &self.bands {
            w.write_record([
                a.band.to_string(),
                a.count.to_string(),
                opt(a.median_normalized_fitness),
                opt(a.median_standard_error),
            ])
            .expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }
}

/// Scores the front on the test set, bands it by ED (measured at the
/// training data's strategic points) and compares the bands.
pub fn band_report(
    front: &[ScoredModel],
    profile: &IdProfile,
    train: &Dataset,
    test: &Dataset,
    options: &ReportOptions,
) -> Result<BandReport, SelectError> {
    if front.is_empty() {
        return Err(SelectError::EmptyFront);
    }
    let mut annotated = front.to_vec();
    annotate_ed(&mut annotated, train)?;
    for (index, m) in annotated.iter().enumerate() {
        m.model
            .check_features(test.p())
            .map_err(|source| SelectError::Model { index, source })?;
    }
    let window = profile.window();
    let test_fit: Vec<f64> = annotated.iter().map(|m| fitness(&m.model, test)).collect();
    let norm = min_max_normalize(&test_fit);
    let rows: Vec<BandRow> = annotated
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let ed = m.ed.unwrap();
            BandRow {
                model_id: i,
                ed,
                band: classify_in_window(ed, &window),
                train_fitness: m.train_fitness,
                test_fitness: test_fit[i],
                normalized_test_fitness: norm[i],
                size: m.size,
                expression: m.model.to_infix(Some(train.feature_names())),
            }
        })
        .collect();

    let by_band = |b: Band| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.band == b)
            .map(|r| r.normalized_test_fitness)
            .collect()
    };
    let bands = Band::ALL
        .iter()
        .enumerate()
        .map(|(k, &band)| {
            let v = by_band(band);
            BandAggregate {
                band,
                count: v.len(),
                median_normalized_fitness: median(&v),
                median_standard_error: bootstrap_median_se(
                    &v,
                    options.bootstrap_resamples,
                    options.seed.wrapping_add(k as u64),
                ),
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    for (first, second) in [
        (Band::Ideal, Band::Close),
        (Band::Ideal, Band::Far),
        (Band::Close, Band::Far),
    ] {
        let (a, b) = (by_band(first), by_band(second));
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let t = mann_whitney_u(&a, &b)?;
        comparisons.push(BandComparison {
            first,
            second,
            u: t.u,
            p_value: t.p_value,
            exact: t.exact,
            significant: t.p_value < options.significance,
        });
    }
    Ok(BandReport {
        window,
        rows,
        bands,
        comparisons,
    })
}
