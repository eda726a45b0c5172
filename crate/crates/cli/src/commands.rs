//! Subcommand implementations. Each stage reads the artifacts of earlier
//! stages from the output directory, so `run` and the staged commands go
//! through exactly the same code and files.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use idsr::dataset::{load_dataset, train_test_split, Dataset, Format};
use idsr::evolve::{evolve_with, pareto_front, EvolveOptions, GenerationStats, Population, ScoredModel};
use idsr::hessian_ed::{
    effective_dimensionality, effective_dimensionality_random, validate_sampling, HessianEstimate,
    SamplingValidation,
};
use idsr::intrinsic_dim::{id_profile_builtin, IdProfile};
use idsr::select::{annotate_ed, band_report, select_models, BandReport, Selection};
use idsr::synth::{planted_dataset, PlantedSpec};
use idsr::StackModel;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, read_json, write_json, write_text};
use crate::config::{RunConfig, Selection as SelectionArg};
use crate::error::{CliError, CliResult};

/// Train and test partitions of the configured dataset.
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load(config: &RunConfig) -> CliResult<Dataset> {
    load_dataset(config.data_path()?, config.format, &config.target_col).map_err(CliError::data)
}

pub fn split(config: &RunConfig) -> CliResult<Split> {
    let d = load(config)?;
    let (train, test) =
        train_test_split(&d, config.train_fraction, config.seed).map_err(CliError::data)?;
    Ok(Split { train, test })
}

/// Runs `f` on a single worker thread when `sequential` is set.
pub fn with_threads<T: Send>(config: &RunConfig, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if !config.sequential {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::runtime(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveOutput {
    pub population: Population,
    pub history: Vec<GenerationStats>,
}

pub fn cmd_id_profile(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = split(config)?;
    let methods = config.estimator_list()?;
    let params = config.estimator_params();
    let profile = with_threads(config, || id_profile_builtin(&data.train, &methods, &params))?
        .map_err(CliError::data)?;
    Ok(vec![write_json(config, artifacts::ID_PROFILE, &profile)?])
}

pub fn cmd_evolve(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = split(config)?;
    let gp = config.gp_config();
    let id_window = match config.selection {
        SelectionArg::ParetoEd => Some(profile_for(config, &data.train)?.window()),
        _ => None,
    };
    let (population, history) = with_threads(config, || {
        evolve_with(&data.train, &gp, EvolveOptions { id_window }, |_| true)
    })?
    .map_err(CliError::runtime)?;

    let mut front = pareto_front(&population.members);
    annotate_ed(&mut front, &data.train).map_err(CliError::runtime)?;

    let mut csv = String::from("generation,best_fitness,median_fitness,best_size,mean_size\n");
    for h in &history {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            h.generation, h.best_fitness, h.median_fitness, h.best_size, h.mean_size
        ));
    }
    let output = EvolveOutput { population, history };
    Ok(vec![
        write_json(config, artifacts::POPULATION, &output)?,
        write_json(config, artifacts::FRONT, &front)?,
        write_text(config, artifacts::HISTORY_CSV, &csv)?,
    ])
}

/// The stored profile when an earlier stage wrote one, else a fresh one.
fn profile_for(config: &RunConfig, train: &Dataset) -> CliResult<IdProfile> {
    if config.out.join(artifacts::ID_PROFILE).exists() {
        return Ok(read_json::<IdProfile>(&config.out, artifacts::ID_PROFILE)?.result);
    }
    let methods = config.estimator_list()?;
    let params = config.estimator_params();
    with_threads(config, || id_profile_builtin(train, &methods, &params))?.map_err(CliError::data)
}

pub fn cmd_select(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = split(config)?;
    let profile: IdProfile = read_json(&config.out, artifacts::ID_PROFILE)?.result;
    let front: Vec<ScoredModel> = read_json(&config.out, artifacts::FRONT)?.result;
    let selection: Selection = select_models(&front, &profile, &data.train).map_err(CliError::data)?;
    let report: BandReport =
        band_report(&front, &profile, &data.train, &data.test, &config.report_options())
            .map_err(CliError::data)?;
    Ok(vec![
        write_json(config, artifacts::SELECTION, &selection)?,
        write_json(config, artifacts::BAND_REPORT, &report)?,
        write_text(config, artifacts::BAND_ROWS_CSV, &report.rows_csv())?,
        write_text(config, artifacts::BAND_SUMMARY_CSV, &report.bands_csv())?,
    ])
}

/// Distinct genotypes in first-seen order.
fn distinct_models(members: &[ScoredModel]) -> Vec<StackModel> {
    let mut seen = HashSet::new();
    members
        .iter()
        .filter(|m| seen.insert(m.model.clone()))
        .map(|m| m.model.clone())
        .collect()
}

pub fn cmd_validate_sampling(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = split(config)?;
    let evolved: EvolveOutput = read_json(&config.out, artifacts::POPULATION)?.result;
    let models = distinct_models(&evolved.population.members);
    for (index, m) in models.iter().enumerate() {
        m.check_features(data.train.p())
            .map_err(|e| CliError::data(format!("model {index}: {e}")))?;
    }
    let parallel = !config.sequential;
    let validation: SamplingValidation = with_threads(config, || {
        validate_sampling(&models, &data.train, config.validation_points, config.seed, parallel)
    })?;
    let mut csv = String::from("difference,count\n");
    for (diff, count) in &validation.histogram {
        csv.push_str(&format!("{diff},{count}\n"));
    }
    Ok(vec![
        write_json(config, artifacts::SAMPLING, &validation)?,
        write_text(config, artifacts::SAMPLING_CSV, &csv)?,
    ])
}

/// Profile, evolve, select and validate, in that order.
pub fn cmd_run(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    // Stale stage outputs must not leak into this run.
    let stale = config.out.join(artifacts::ID_PROFILE);
    if stale.exists() {
        std::fs::remove_file(&stale)
            .map_err(|e| CliError::runtime(format!("cannot remove {}: {e}", stale.display())))?;
    }
    let mut written = cmd_id_profile(config)?;
    written.extend(cmd_evolve(config)?);
    written.extend(cmd_select(config)?);
    written.extend(cmd_validate_sampling(config)?);
    Ok(written)
}

/// Reads a model given inline (`{...}`) or as a path to a JSON file.
pub fn parse_model(spec: &str) -> CliResult<StackModel> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec)
            .map_err(|e| CliError::data(format!("cannot read model {spec}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("bad model JSON: {e}")))
}

pub fn cmd_ed(config: &RunConfig, model: &StackModel, points: Option<usize>) -> CliResult<Vec<PathBuf>> {
    let d = load(config)?;
    model.check_features(d.p()).map_err(CliError::data)?;
    let estimate: HessianEstimate = match points {
        None => effective_dimensionality(model, &d),
        Some(0) => return Err(CliError::config("--points must be positive")),
        Some(n) => effective_dimensionality_random(model, &d, n, config.seed),
    };
    Ok(vec![write_json(config, artifacts::ED, &estimate)?])
}

pub fn cmd_synth(spec: &PlantedSpec, output: &Path, target_col: &str) -> CliResult<Vec<PathBuf>> {
    if spec.p < spec.formula.min_features().max(1) {
        return Err(CliError::config(format!(
            "formula needs at least {} features, got p = {}",
            spec.formula.min_features(),
            spec.p
        )));
    }
    if spec.n < 2 || !(spec.range.0 < spec.range.1) || !(spec.noise >= 0.0) {
        return Err(CliError::config("need n >= 2, low < high and noise >= 0"));
    }
    let d = planted_dataset(spec);
    let format = Format::from_path(output).unwrap_or(Format::Tsv);
    let dir = match output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::runtime(format!("cannot create temp file: {e}")))?;
    d.write_delimited(tmp.path(), format, target_col)
        .map_err(CliError::runtime)?;
    tmp.persist(output)
        .map_err(|e| CliError::runtime(format!("cannot move into {}: {}", output.display(), e.error)))?;
    Ok(vec![output.to_path_buf()])
}
