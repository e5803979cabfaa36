//! Command-line front end: `simulate`, `fit`, `predict`, `evaluate` and
//! `study`.
//!
//! Every command takes its settings from flags and, optionally, from a TOML
//! file given with `--config`. The file holds an optional top-level `jobs`
//! key and one table per command with the flag names as keys (underscores
//! instead of dashes). Flags win over the file. Each run writes a
//! `manifest.json` with the fully resolved settings.

use std::path::Path;

use clap::{Parser, Subcommand};
use serde::Deserialize;

/// Fill `None` fields of `$dst` from `$src`.
macro_rules! merge {
    ($dst:expr, $src:expr; $($field:ident),+ $(,)?) => {
        $(
            if $dst.$field.is_none() {
                $dst.$field = $src.$field.take();
            }
        )+
    };
}

pub mod common;
pub mod error;
pub mod evaluate;
pub mod fit;
pub mod predict;
pub mod simulate;
pub mod study;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "convintensity", version, about = "Log-convolution intensity estimation for spatial point patterns")]
pub struct Cli {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Worker threads for replicate loops [default: all cores].
    #[arg(long, global = true, env = "CONVINTENSITY_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate replicate point patterns from a scenario kernel.
    Simulate(simulate::SimulateArgs),
    /// Fit the log-convolution model to a point pattern.
    Fit(fit::FitArgs),
    /// Intensity map from a kernel spectrum.
    Predict(predict::PredictArgs),
    /// Score estimated kernels against the truth and intensity maps by AUC.
    Evaluate(evaluate::EvaluateArgs),
    /// Run the replicated simulation study.
    Study(study::StudyArgs),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    jobs: Option<usize>,
    simulate: Option<simulate::SimulateArgs>,
    fit: Option<fit::FitArgs>,
    predict: Option<predict::PredictArgs>,
    evaluate: Option<evaluate::EvaluateArgs>,
    study: Option<study::StudyArgs>,
}

fn load_config(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::io(path, e))
}

/// Resolve configuration and run the selected command.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut file = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let jobs = match cli.jobs.or(file.jobs) {
        Some(0) => return Err(CliError::field("jobs", "must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::field("jobs", e))?;

    match cli.command {
        Command::Simulate(mut a) => {
            if let Some(f) = file.simulate.take() {
                a.merge(f);
            }
            let cfg = a.resolve()?;
            pool.install(|| simulate::run(&cfg))
        }
        Command::Fit(mut a) => {
            if let Some(f) = file.fit.take() {
                a.merge(f);
            }
            let cfg = a.resolve()?;
            pool.install(|| fit::run(&cfg))
        }
        Command::Predict(mut a) => {
            if let Some(f) = file.predict.take() {
                a.merge(f);
            }
            let cfg = a.resolve()?;
            pool.install(|| predict::run(&cfg))
        }
        Command::Evaluate(mut a) => {
            if let Some(f) = file.evaluate.take() {
                a.merge(f);
            }
            let cfg = a.resolve()?;
            pool.install(|| evaluate::run(&cfg))
        }
        Command::Study(mut a) => {
            if let Some(f) = file.study.take() {
                a.merge(f);
            }
            let cfg = a.resolve()?;
            pool.install(|| study::run(&cfg))
        }
    }
}
