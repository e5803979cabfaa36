//! `simulate`: replicate point patterns from a scenario kernel.

use std::path::PathBuf;

use clap::Args;
use convintensity::io;
use convintensity::scenario::Scenario;
use convintensity::simulate::{simulate_poisson, ThomasConfig, ThomasSimulator, THOMAS_PILOT_SEED};
use convintensity::{IntensityMap, PointPattern, Seed};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{self, Covariate, Kernel, Process};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Scenario kernel (a or b).
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// Kernel spectrum file used instead of a scenario; its zero term is
    /// recalibrated to the target count.
    #[arg(long, conflicts_with = "scenario")]
    pub beta: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub process: Option<Process>,
    /// Expected number of points.
    #[arg(long)]
    pub target_n: Option<f64>,
    /// Number of replicates [default: 100].
    #[arg(long)]
    pub m: Option<usize>,
    /// Base seed; replicate m uses seed + m [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Covariate grid file [default: built-in synthetic image].
    #[arg(long)]
    pub covariate: Option<PathBuf>,
    /// Mean number of Thomas clusters [default: 100].
    #[arg(long)]
    pub mean_clusters: Option<f64>,
    /// Thomas offspring standard deviation [default: 30].
    #[arg(long)]
    pub offspring_sd: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn merge(&mut self, mut file: SimulateArgs) {
        if self.scenario.is_none() && self.beta.is_none() {
            self.scenario = file.scenario.take();
            self.beta = file.beta.take();
        }
        merge!(self, file; process, target_n, m, seed, covariate, mean_clusters, offspring_sd, out);
    }

    pub fn resolve(self) -> CliResult<SimulateConfig> {
        let kernel = match (self.scenario, self.beta) {
            (Some(_), Some(_)) => return Err(CliError::field("beta", "conflicts with `scenario`")),
            (Some(s), None) => Kernel::Scenario(s),
            (None, Some(p)) => Kernel::File(p),
            (None, None) => Kernel::Scenario(Scenario::A),
        };
        let process = self.process.unwrap_or(Process::Poisson);
        let target_n = common::positive("target_n", common::required("target_n", self.target_n)?)?;
        let thomas = match process {
            Process::Poisson => None,
            Process::Thomas => Some(ThomasConfig {
                mean_clusters: common::positive("mean_clusters", self.mean_clusters.unwrap_or(100.0))?,
                offspring_sd: common::positive("offspring_sd", self.offspring_sd.unwrap_or(30.0))?,
                target_count: target_n,
            }),
        };
        Ok(SimulateConfig {
            kernel,
            process,
            target_n,
            m: common::at_least("m", self.m.unwrap_or(100), 1)?,
            seed: self.seed.unwrap_or(1),
            covariate: self.covariate,
            thomas,
            out: common::required("out", self.out)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub kernel: Kernel,
    pub process: Process,
    pub target_n: f64,
    pub m: usize,
    pub seed: u64,
    pub covariate: Option<PathBuf>,
    pub thomas: Option<ThomasConfig>,
    pub out: PathBuf,
}

/// Draws patterns for one intensity map; Thomas simulators are calibrated once.
pub enum Generator {
    Poisson(IntensityMap),
    Thomas(ThomasSimulator),
}

impl Generator {
    pub fn new(map: IntensityMap, thomas: Option<ThomasConfig>) -> CliResult<Self> {
        Ok(match thomas {
            None => Generator::Poisson(map),
            Some(cfg) => Generator::Thomas(ThomasSimulator::new(map, cfg, Seed(THOMAS_PILOT_SEED))?),
        })
    }

    pub fn draw(&self, seed: Seed) -> PointPattern {
        match self {
            Generator::Poisson(map) => simulate_poisson(map, seed),
            Generator::Thomas(sim) => sim.simulate(seed),
        }
    }

    pub fn correction(&self) -> Option<f64> {
        match self {
            Generator::Poisson(_) => None,
            Generator::Thomas(sim) => Some(sim.correction()),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a SimulateConfig,
    covariate: String,
    intercept: f64,
    expected_count: f64,
    thomas_correction: Option<f64>,
    files: Vec<String>,
    counts: Vec<usize>,
}

pub fn run(cfg: &SimulateConfig) -> CliResult<()> {
    let covariate = Covariate::load(cfg.covariate.as_deref())?;
    let (truth, map) = covariate.calibrate(&cfg.kernel.shape()?, cfg.target_n)?;
    let expected = map.expected_count();
    let generator = Generator::new(map, cfg.thomas)?;

    common::create_dir(&cfg.out)?;
    common::write_file(&cfg.out.join("truth.csv"), |out| io::write_spectrum(&truth, out))?;
    let base = Seed(cfg.seed);
    let results: Vec<CliResult<(String, usize)>> = (0..cfg.m)
        .into_par_iter()
        .map(|m| {
            let pattern = generator.draw(base.replicate(m));
            let name = format!("{}.csv", common::replicate_name("pattern", m));
            common::write_file(&cfg.out.join(&name), |out| io::write_pattern(&pattern, out))?;
            Ok((name, pattern.len()))
        })
        .collect();
    let (files, counts) = results.into_iter().collect::<CliResult<Vec<_>>>()?.into_iter().unzip();
    log::info!("wrote {} patterns to {}", cfg.m, cfg.out.display());

    common::write_manifest(
        &cfg.out,
        &Manifest {
            command: "simulate",
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            covariate: covariate.source,
            intercept: truth.zero(),
            expected_count: expected,
            thomas_correction: generator.correction(),
            files,
            counts,
        },
    )
}
