//! Tabular regression data: loading, splitting and strategic points.
//!
//! Files follow the PMLB layout: delimited text with a header row and a
//! target column (named `target` unless told otherwise). Every other column
//! is a numeric feature.

use std::collections::HashSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TARGET_COLUMN: &str = "target";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing target column {0:?}")]
    MissingTargetColumn(String),
    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("need at least 2 valid rows, found {0}")]
    TooFewRows(usize),
    #[error("dataset needs at least one feature column")]
    NoFeatures,
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("feature matrix has {got} values, expected {n} x {p}")]
    Shape { got: usize, n: usize, p: usize },
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("empty dataset")]
    Empty,
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("train set too small: {0} rows")]
    TrainTooSmall(usize),
    #[error("empty test set")]
    EmptyTestSet,
}

/// Field delimiter of a tabular file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    /// Infers the format from a file extension (`.tsv`, `.csv`, `.txt`).
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "tsv" | "tab" | "txt" => Some(Format::Tsv),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }

    pub fn delimiter(self) -> u8 {
        match self {
            Format::Tsv => b'\t',
            Format::Csv => b',',
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected tsv or csv)")),
        }
    }
}

/// Feature matrix plus target vector. Immutable once built.
///
/// Features are stored row-major; `row(i)` is the input vector of sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    feature_names: Vec<String>,
    features: Vec<f64>,
    target: Vec<f64>,
    dropped_rows: usize,
}

/// JSON-friendly description of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub dropped_rows: usize,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major features. Requires at least one row,
    /// one feature, unique names and finite values throughout.
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        target: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        let p = feature_names.len();
        let n = target.len();
        if p == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        if features.len() != n * p {
            return Err(DatasetError::Shape {
                got: features.len(),
                n,
                p,
            });
        }
        let mut seen = HashSet::new();
        for f in &feature_names {
            if !seen.insert(f.as_str()) {
                return Err(DatasetError::DuplicateFeature(f.clone()));
            }
        }
        for i in 0..n {
            let row_ok = features[i * p..(i + 1) * p].iter().all(|v| v.is_finite());
            if !row_ok || !target[i].is_finite() {
                return Err(DatasetError::NonFinite(i));
            }
        }
        Ok(Dataset {
            name: name.into(),
            feature_names,
            features,
            target,
            dropped_rows: 0,
        })
    }

    /// Convenience constructor from row vectors with generated names `x0..`.
    pub fn from_rows(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        target: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        let p = rows.first().map_or(0, Vec::len);
        let names = (0..p).map(|i| format!("x{i}")).collect();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(DatasetError::Shape {
                    got: r.len(),
                    n: rows.len(),
                    p,
                });
            }
            flat.extend_from_slice(r);
        }
        Dataset::new(name, names, flat, target)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Row-major feature matrix, `n * p` values.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.p())
    }

    /// Rows dropped at load time because they held non-finite values.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            name: self.name.clone(),
            n: self.n(),
            p: self.p(),
            dropped_rows: self.dropped_rows,
            feature_names: self.feature_names.clone(),
        }
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset, DatasetError> {
        let mut features = Vec::with_capacity(indices.len() * self.p());
        let mut target = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            target.push(self.target[i]);
        }
        Dataset::new(
            self.name.clone(),
            self.feature_names.clone(),
            features,
            target,
        )
    }

    /// Same data with every feature multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Dataset {
        Dataset {
            features: self.features.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Writes the dataset back in PMLB layout: features then `target`.
    pub fn write_delimited(
        &self,
        path: impl AsRef<Path>,
        format: Format,
        target_column: &str,
    ) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = csv::WriterBuilder::new()
            .delimiter(format.delimiter())
            .from_writer(BufWriter::new(file));
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(target_column);
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            // `Display` for f64 prints the shortest string that round-trips.
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

/// Loads a delimited file. `format = None` infers it from the extension,
/// falling back to sniffing the header for a tab.
pub fn load_dataset(
    path: impl AsRef<Path>,
    format: Option<Format>,
    target_column: &str,
) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let format = format
        .or_else(|| Format::from_path(path))
        .unwrap_or_else(|| {
            let header = text.lines().next().unwrap_or("");
            if header.contains('\t') {
                Format::Tsv
            } else {
                Format::Csv
            }
        });
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    parse_delimited(&name, text.as_bytes(), format, target_column)
}

/// Parses delimited text already in memory. See [`load_dataset`].
pub fn parse_delimited(
    name: &str,
    bytes: &[u8],
    format: Format,
    target_column: &str,
) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| DatasetError::MissingTargetColumn(target_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut target = Vec::new();
    let mut dropped = 0;
    let mut row_buf = Vec::with_capacity(headers.len());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Data rows are numbered from 1, after the header.
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(DatasetError::RaggedRow {
                row,
                found: rec.len(),
                expected: headers.len(),
            });
        }
        row_buf.clear();
        for (c, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| DatasetError::NonNumeric {
                row,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            row_buf.push(v);
        }
        if row_buf.iter().any(|v| !v.is_finite()) {
            dropped += 1;
            continue;
        }
        for (c, &v) in row_buf.iter().enumerate() {
            if c == target_idx {
                target.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if target.len() < 2 {
        return Err(DatasetError::TooFewRows(target.len()));
    }
    let mut d = Dataset::new(name, feature_names, features, target)?;
    d.dropped_rows = dropped;
    Ok(d)
}

/// Empty cells count as missing (NaN) and get the row dropped.
fn parse_cell(cell: &str) -> Option<f64> {
    if cell.is_empty() {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok()
}

/// Shuffles rows under `seed` and returns `(train, test)`; both keep the
/// original row order. `round(train_fraction * n)` rows go to train.
pub fn train_test_split(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let (train_idx, test_idx) = split_indices(d.n(), train_fraction, seed);
    if train_idx.len() < 2 {
        return Err(DatasetError::TrainTooSmall(train_idx.len()));
    }
    if test_idx.is_empty() {
        return Err(DatasetError::EmptyTestSet);
    }
    Ok((d.subset(&train_idx)?, d.subset(&test_idx)?))
}

/// Index partition behind [`train_test_split`].
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).min(n);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// The three rows at which a model's Hessian is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicPoints {
    pub p_min: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub p_max: Vec<f64>,
    /// Source rows as `[min, mean, max]`.
    pub row_indices: [usize; 3],
}

impl StrategicPoints {
    pub fn points(&self) -> [&[f64]; 3] {
        [&self.p_min, &self.p_mean, &self.p_max]
    }
}

/// Rows holding the minimum target, the target closest to the mean, and the
/// maximum target. Ties go to the lowest row index.
pub fn strategic_points(d: &Dataset) -> Result<StrategicPoints, DatasetError> {
    let y = d.target();
    if y.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut i_min = 0;
    let mut i_max = 0;
    let mut i_mean = 0;
    for i in 1..y.len() {
        if y[i] < y[i_min] {
            i_min = i;
        }
        if y[i] > y[i_max] {
            i_max = i;
        }
        if (y[i] - mean).abs() < (y[i_mean] - mean).abs() {
            i_mean = i;
        }
    }
    Ok(StrategicPoints {
        p_min: d.row(i_min).to_vec(),
        p_mean: d.row(i_mean).to_vec(),
        p_max: d.row(i_max).to_vec(),
        row_indices: [i_min, i_mean, i_max],
    })
}
