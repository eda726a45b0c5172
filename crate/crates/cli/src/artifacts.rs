//! Artifact files: JSON envelopes carrying the run configuration, CSV tables
//! for plotting, and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: &str = "idsr-artifact/1";

pub const ID_PROFILE: &str = "id_profile.json";
pub const POPULATION: &str = "population.json";
pub const FRONT: &str = "front.json";
pub const SELECTION: &str = "selection.json";
pub const BAND_REPORT: &str = "band_report.json";
pub const SAMPLING: &str = "sampling_validation.json";
pub const ED: &str = "ed.json";

pub const HISTORY_CSV: &str = "history.csv";
pub const BAND_ROWS_CSV: &str = "band_rows.csv";
pub const BAND_SUMMARY_CSV: &str = "band_summary.csv";
pub const SAMPLING_CSV: &str = "sampling_histogram.csv";

/// The five artifacts of a pipeline run.
pub const PIPELINE_ARTIFACTS: [&str; 5] = [ID_PROFILE, POPULATION, FRONT, SELECTION, BAND_REPORT];

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: String,
    pub artifact: String,
    pub config: RunConfig,
    pub result: T,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::runtime(format!("cannot create temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::runtime(format!("cannot move into {}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_json<T: Serialize>(
    config: &RunConfig,
    name: &str,
    result: &T,
) -> CliResult<PathBuf> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION.to_string(),
        artifact: name.trim_end_matches(".json").to_string(),
        config: config.clone(),
        result,
    };
    let mut text = serde_json::to_string_pretty(&env)
        .map_err(|e| CliError::runtime(format!("cannot serialize {name}: {e}")))?;
    text.push('\n');
    let path = config.out.join(name);
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn write_text(config: &RunConfig, name: &str, text: &str) -> CliResult<PathBuf> {
    let path = config.out.join(name);
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

/// Reads an artifact written by an earlier stage.
pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> CliResult<Envelope<T>> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::data(format!(
            "cannot read {} ({e}); run the stage that produces it first",
            path.display()
        ))
    })?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("malformed artifact {}: {e}", path.display())))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(CliError::data(format!(
            "{} has schema {:?}, expected {SCHEMA_VERSION:?}",
            path.display(),
            env.schema_version
        )));
    }
    Ok(env)
}
