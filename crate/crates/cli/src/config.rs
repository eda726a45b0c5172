//! Run configuration: a flat key-value document (TOML on disk) that every
//! artifact embeds verbatim.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use idsr::dataset::{Format, DEFAULT_TARGET_COLUMN};
use idsr::evolve::{ComplexityMetric, GpConfig, SelectionScheme};
use idsr::intrinsic_dim::{parse_estimators, Estimator, EstimatorParams};
use idsr::select::ReportOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Parent-selection scheme as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    Tournament,
    Pareto,
    ParetoEd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: Option<Format>,
    pub target_col: String,
    pub train_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub sequential: bool,

    /// `all` or a comma-separated list of estimator names.
    pub estimators: String,
    pub k: usize,
    pub knn_graph_k: usize,
    pub lpca_alpha: f64,
    pub corrint_low: f64,
    pub corrint_high: f64,
    pub corrint_steps: usize,
    pub twonn_discard: f64,

    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub spawn_rate: f64,
    pub elitism_count: usize,
    pub tournament_size: usize,
    pub population_size: usize,
    pub generations: usize,
    pub max_complexity: usize,
    pub max_init_size: usize,
    pub selection: Selection,

    /// Random rows per model in the sampling validation.
    pub validation_points: usize,
    pub bootstrap_resamples: usize,
    pub significance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gp = GpConfig::default();
        let est = EstimatorParams::default();
        let rep = ReportOptions::default();
        RunConfig {
            data: None,
            format: None,
            target_col: DEFAULT_TARGET_COLUMN.to_string(),
            train_fraction: 0.75,
            seed: 0,
            out: PathBuf::from("idsr-out"),
            sequential: false,
            estimators: "all".to_string(),
            k: est.k,
            knn_graph_k: est.knn_graph_k,
            lpca_alpha: est.lpca_alpha,
            corrint_low: est.corrint_quantiles.0,
            corrint_high: est.corrint_quantiles.1,
            corrint_steps: est.corrint_steps,
            twonn_discard: est.twonn_discard,
            mutation_rate: gp.mutation_rate,
            crossover_rate: gp.crossover_rate,
            spawn_rate: gp.spawn_rate,
            elitism_count: gp.elitism_count,
            tournament_size: gp.tournament_size,
            population_size: gp.population_size,
            generations: gp.generations,
            max_complexity: gp.max_complexity,
            max_init_size: gp.max_init_size,
            selection: Selection::Tournament,
            validation_points: 100,
            bootstrap_resamples: rep.bootstrap_resamples,
            significance: rep.significance,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> CliResult<RunConfig> {
        toml::from_str(s).map_err(|e| CliError::config(format!("bad config: {e}")))
    }

    pub fn from_file(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn gp_config(&self) -> GpConfig {
        let (selection_scheme, complexity_metric) = match self.selection {
            Selection::Tournament => (SelectionScheme::Tournament, ComplexityMetric::Size),
            Selection::Pareto => (SelectionScheme::ParetoTournament, ComplexityMetric::Size),
            Selection::ParetoEd => (
                SelectionScheme::ParetoTournament,
                ComplexityMetric::EffectiveDimensionality,
            ),
        };
        GpConfig {
            mutation_rate: self.mutation_rate,
            crossover_rate: self.crossover_rate,
            spawn_rate: self.spawn_rate,
            elitism_count: self.elitism_count,
            tournament_size: self.tournament_size,
            population_size: self.population_size,
            generations: self.generations,
            max_complexity: self.max_complexity,
            max_init_size: self.max_init_size,
            selection_scheme,
            complexity_metric,
            seed: self.seed,
            parallel: !self.sequential,
            ..GpConfig::default()
        }
    }

    pub fn estimator_params(&self) -> EstimatorParams {
        EstimatorParams {
            k: self.k,
            knn_graph_k: self.knn_graph_k,
            lpca_alpha: self.lpca_alpha,
            corrint_quantiles: (self.corrint_low, self.corrint_high),
            corrint_steps: self.corrint_steps,
            twonn_discard: self.twonn_discard,
            seed: self.seed,
        }
    }

    pub fn estimator_list(&self) -> CliResult<Vec<Estimator>> {
        let list = parse_estimators(&self.estimators).map_err(CliError::config)?;
        if list.len() < 2 {
            return Err(CliError::config(
                "at least two estimators are needed to form an ID window",
            ));
        }
        Ok(list)
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            bootstrap_resamples: self.bootstrap_resamples,
            seed: self.seed,
            significance: self.significance,
        }
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::config("no dataset given (use --data or `data` in the config)"))
    }

    /// Checks every nested invariant. Called before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        self.data_path()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::config(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        if self.target_col.is_empty() {
            return Err(CliError::config("target_col is empty"));
        }
        self.estimator_list()?;
        if self.k < 2 || self.knn_graph_k < 1 {
            return Err(CliError::config("k must be at least 2 and knn_graph_k at least 1"));
        }
        if !(self.lpca_alpha > 0.0 && self.lpca_alpha < 1.0) {
            return Err(CliError::config("lpca_alpha must lie in (0, 1)"));
        }
        if !(0.0 < self.corrint_low && self.corrint_low < self.corrint_high && self.corrint_high <= 1.0)
        {
            return Err(CliError::config("need 0 < corrint_low < corrint_high <= 1"));
        }
        if self.corrint_steps < 2 {
            return Err(CliError::config("corrint_steps must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.twonn_discard) {
            return Err(CliError::config("twonn_discard must lie in [0, 1)"));
        }
        self.gp_config().validate().map_err(CliError::config)?;
        if self.validation_points == 0 {
            return Err(CliError::config("validation_points must be positive"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(CliError::config("bootstrap_resamples must be positive"));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(CliError::config("significance must lie in (0, 1)"));
        }
        Ok(())
    }
}
