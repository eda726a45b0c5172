//! Command-line front end: profile the data, evolve models, band the Pareto
//! front by effective dimensionality and report.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use idsr::dataset::{Format, DEFAULT_TARGET_COLUMN};
use idsr::synth::{Formula, PlantedSpec};

pub use config::{RunConfig, Selection};
pub use error::{CliError, CliResult, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "idsr", version, about = "Symbolic regression with intrinsic-dimension model selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every pipeline stage. Each overrides the matching key of
/// the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Delimited data file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// tsv or csv; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long)]
    pub target_col: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat TOML file with any RunConfig keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `all` or a comma-separated list (MLE,TwoNN,MADA,MoM,lPCA,CorrInt,KNN).
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub pop_size: Option<usize>,
    #[arg(long, value_enum)]
    pub selection: Option<Selection>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Single-threaded execution.
    #[arg(long)]
    pub sequential: bool,
}

impl CommonArgs {
    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = self.format {
            c.format = Some(v);
        }
        if let Some(v) = &self.target_col {
            c.target_col = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.estimators {
            c.estimators = v.clone();
        }
        if let Some(v) = self.generations {
            c.generations = v;
        }
        if let Some(v) = self.pop_size {
            c.population_size = v;
        }
        if let Some(v) = self.selection {
            c.selection = v;
        }
        if let Some(v) = self.train_fraction {
            c.train_fraction = v;
        }
        c.sequential |= self.sequential;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate intrinsic dimensionality and write the ID window.
    IdProfile(CommonArgs),
    /// Evolve a population and write it with its Pareto front.
    Evolve(CommonArgs),
    /// Band the front by ED, select models and write the band report.
    Select(CommonArgs),
    /// Compare 3-point ED with random-point ED over the evolved population.
    ValidateSampling(CommonArgs),
    /// All stages in order.
    Run(CommonArgs),
    /// Effective dimensionality of one model on a dataset.
    Ed(EdArgs),
    /// Generate a planted-function dataset.
    Synth(SynthArgs),
    /// Print the effective configuration as TOML.
    Config(CommonArgs),
}

#[derive(Debug, Args)]
pub struct EdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model JSON, inline or as a file path.
    #[arg(long)]
    pub model: String,
    /// Average over this many random rows instead of the strategic points.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// product-sine, identity, sum-squares-<k> or model JSON.
    #[arg(long, default_value = "product-sine")]
    pub formula: Formula,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    /// Draw only this many features; the rest are linear mixes of them.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Noise standard deviation relative to the clean target's.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub low: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub high: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = DEFAULT_TARGET_COLUMN)]
    pub target_col: String,
    #[arg(long)]
    pub output: PathBuf,
}

/// Executes a parsed command; returns the files written.
pub fn execute(command: &Command) -> CliResult<Vec<PathBuf>> {
    match command {
        Command::IdProfile(a) => commands::cmd_id_profile(&a.resolve()?),
        Command::Evolve(a) => commands::cmd_evolve(&a.resolve()?),
        Command::Select(a) => commands::cmd_select(&a.resolve()?),
        Command::ValidateSampling(a) => commands::cmd_validate_sampling(&a.resolve()?),
        Command::Run(a) => commands::cmd_run(&a.resolve()?),
        Command::Ed(a) => {
            let config = a.common.resolve()?;
            let model = commands::parse_model(&a.model)?;
            commands::cmd_ed(&config, &model, a.points)
        }
        Command::Synth(a) => {
            let spec = PlantedSpec {
                n: a.n,
                p: a.p,
                latent_dim: a.latent_dim,
                range: (a.low, a.high),
                noise: a.noise,
                formula: a.formula.clone(),
                seed: a.seed,
            };
            commands::cmd_synth(&spec, &a.output, &a.target_col)
        }
        Command::Config(a) => {
            let mut c = match &a.config {
                Some(path) => RunConfig::from_file(path)?,
                None => RunConfig::default(),
            };
            // Print even without a dataset so a template can be generated.
            if a.data.is_some() {
                c = a.resolve()?;
            }
            print!("{}", c.to_toml_string());
            Ok(Vec::new())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors go to stderr as one JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
