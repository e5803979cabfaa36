//! `evaluate`: replicate metrics against a true kernel and AUC of maps.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use convintensity::evaluate::{auc, write_reports, ReplicateEstimate, ReplicateReport};
use convintensity::scenario::{coefficient_support, Scenario};
use convintensity::{spiral_order, IntensityMap};
use serde::{Deserialize, Serialize};

use crate::common::{self, Method};
use crate::error::{CliError, CliResult};
use crate::fit::DEFAULT_K;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// True kernel spectrum CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Estimated kernel spectra, one per replicate.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub estimate: Option<Vec<PathBuf>>,
    /// Frequencies scored [default: 112].
    #[arg(long)]
    pub k: Option<usize>,
    /// Method label for the report [default: lasso].
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Scenario label for the report [default: a].
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// Expected count label for the report.
    #[arg(long)]
    pub target_n: Option<f64>,
    /// Point pattern scored by AUC.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Intensity maps to score, as `name=path`.
    #[arg(long, num_args = 1..)]
    pub map: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvaluateArgs {
    pub fn merge(&mut self, mut file: EvaluateArgs) {
        merge!(self, file; truth, estimate, k, method, scenario, target_n, pattern, map, out);
    }

    pub fn resolve(self) -> CliResult<EvaluateConfig> {
        let replicates = match (self.truth, self.estimate) {
            (Some(truth), Some(estimates)) if !estimates.is_empty() => Some((truth, estimates)),
            (Some(_), _) => return Err(CliError::field("estimate", "is required with `truth`")),
            (None, Some(_)) => return Err(CliError::field("truth", "is required with `estimate`")),
            (None, None) => None,
        };
        let maps = match (self.pattern, self.map) {
            (Some(pattern), Some(maps)) if !maps.is_empty() => {
                let named = maps
                    .iter()
                    .map(|m| match m.split_once('=') {
                        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
                        _ => Err(CliError::field("map", format!("expected `name=path`, got `{m}`"))),
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Some((pattern, named))
            }
            (Some(_), _) => return Err(CliError::field("map", "is required with `pattern`")),
            (None, Some(_)) => return Err(CliError::field("pattern", "is required with `map`")),
            (None, None) => None,
        };
        if replicates.is_none() && maps.is_none() {
            return Err(CliError::Config("nothing to evaluate: give `truth` with `estimate`, or `pattern` with `map`".into()));
        }
        if let Some(t) = self.target_n {
            common::positive("target_n", t)?;
        }
        Ok(EvaluateConfig {
            truth: replicates.as_ref().map(|r| r.0.clone()),
            estimates: replicates.map(|r| r.1).unwrap_or_default(),
            k: common::at_least("k", self.k.unwrap_or(DEFAULT_K), 1)?,
            method: self.method.unwrap_or(Method::Lasso),
            scenario: self.scenario.unwrap_or(Scenario::A),
            target_n: self.target_n,
            pattern: maps.as_ref().map(|m| m.0.clone()),
            maps: maps.map(|m| m.1).unwrap_or_default(),
            out: common::required("out", self.out)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateConfig {
    pub truth: Option<PathBuf>,
    pub estimates: Vec<PathBuf>,
    pub k: usize,
    pub method: Method,
    pub scenario: Scenario,
    pub target_n: Option<f64>,
    pub pattern: Option<PathBuf>,
    pub maps: Vec<(String, PathBuf)>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a EvaluateConfig,
    report: Option<&'a ReplicateReport>,
    auc: Vec<(String, f64)>,
}

pub fn run(cfg: &EvaluateConfig) -> CliResult<()> {
    let report = match &cfg.truth {
        Some(truth_path) => {
            let truth = common::read_spectrum(truth_path)?;
            let order = spiral_order(cfg.k);
            let true_support = coefficient_support(&truth, &order);
            let estimates = cfg
                .estimates
                .iter()
                .map(|p| {
                    let beta = common::read_spectrum(p)?.restricted_to(&order);
                    let support = coefficient_support(&beta, &order);
                    Ok(ReplicateEstimate { beta, support })
                })
                .collect::<CliResult<Vec<_>>>()?;
            let target = cfg.target_n.unwrap_or(f64::NAN);
            Some(ReplicateReport::aggregate(cfg.scenario, cfg.method.kind(), &order, target, &truth, &true_support, &estimates)?)
        }
        None => None,
    };

    let mut aucs = Vec::new();
    if let Some(pattern_path) = &cfg.pattern {
        let maps = cfg
            .maps
            .iter()
            .map(|(name, p)| Ok((name.clone(), IntensityMap::new(common::read_grid(p)?).map_err(|e| CliError::io(p, e))?)))
            .collect::<CliResult<Vec<_>>>()?;
        let window = maps[0].1.window();
        if let Some((name, m)) = maps.iter().find(|(_, m)| m.window() != window) {
            return Err(CliError::field("map", format!("window of `{name}` ({:?}) differs from {:?}", m.window(), window)));
        }
        let pattern = common::read_pattern(pattern_path, window)?;
        for (name, map) in &maps {
            aucs.push((name.clone(), auc(map, &pattern)?));
        }
    }

    common::create_dir(&cfg.out)?;
    if let Some(r) = &report {
        common::write_file(&cfg.out.join("report.csv"), |out| Ok(write_reports(std::slice::from_ref(r), out)?))?;
    }
    if !aucs.is_empty() {
        common::write_file(&cfg.out.join("auc.csv"), |out| {
            writeln!(out, "method,auc")?;
            for (name, a) in &aucs {
                writeln!(out, "{name},{a:.10e}")?;
            }
            Ok(())
        })?;
    }
    common::write_manifest(
        &cfg.out,
        &Manifest { command: "evaluate", version: env!("CARGO_PKG_VERSION"), config: cfg, report: report.as_ref(), auc: aucs },
    )
}
