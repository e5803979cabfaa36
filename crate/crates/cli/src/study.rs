//! `study`: the replicated simulation study.
//!
//! For every expected count the true kernel is calibrated, `m` patterns are
//! drawn and fitted, and the replicates are aggregated into one report row.
//! Replicates run on the current rayon pool; every replicate has its own
//! seed and output file, and aggregation happens afterwards in a fixed order,
//! so outputs do not depend on the number of workers.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use convintensity::evaluate::{auc, tpr_fpr, write_reports, ReplicateEstimate, ReplicateReport};
use convintensity::model::fit_loglinear_baseline;
use convintensity::scenario::{coefficient_support, Scenario};
use convintensity::simulate::ThomasConfig;
use convintensity::{
    build_scheme, coeffs_to_beta_spectrum, io, spiral_order, FrequencyOrder, Parallelism, SchemeOptions, Seed, SolverConfig, Spectrum,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{self, Covariate, Method, Process, WeightScheme};
use crate::error::{CliError, CliResult};
use crate::fit::{check_method_k, estimate, quadrature_grid, solver_config, DEFAULT_K};
use crate::simulate::Generator;

pub const DEFAULT_TARGETS: [f64; 3] = [200.0, 800.0, 1800.0];

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyArgs {
    /// Scenario kernel (a, b or null) [default: a].
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long, value_enum)]
    pub process: Option<Process>,
    /// Expected counts, comma separated [default: 200,800,1800].
    #[arg(long, value_delimiter = ',')]
    pub target_n: Option<Vec<f64>>,
    /// Replicates per expected count [default: 100].
    #[arg(long)]
    pub m: Option<usize>,
    /// Base seed; replicate m uses seed + m [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of spiral frequencies [default: 112].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub n_lambda: Option<usize>,
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    /// Quadrature grid columns [default: 128].
    #[arg(long)]
    pub nx: Option<usize>,
    /// Quadrature grid rows [default: 96].
    #[arg(long)]
    pub ny: Option<usize>,
    /// Covariate grid file [default: built-in synthetic image].
    #[arg(long)]
    pub covariate: Option<PathBuf>,
    #[arg(long)]
    pub mean_clusters: Option<f64>,
    #[arg(long)]
    pub offspring_sd: Option<f64>,
    /// Also fit the log-linear baseline and report its AUC.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl StudyArgs {
    pub fn merge(&mut self, mut file: StudyArgs) {
        merge!(self, file; scenario, process, target_n, m, seed, k, method, n_lambda, lambda_min_ratio, nx, ny, covariate, mean_clusters, offspring_sd, out);
        self.baseline |= file.baseline;
    }

    pub fn resolve(self) -> CliResult<StudyConfig> {
        let solver = solver_config(self.n_lambda, self.lambda_min_ratio)?;
        let method = self.method.unwrap_or(Method::Lasso);
        let k = common::at_least("k", self.k.unwrap_or(DEFAULT_K), 1)?;
        check_method_k(method, k, &solver)?;
        let targets = self.target_n.unwrap_or_else(|| DEFAULT_TARGETS.to_vec());
        if targets.is_empty() {
            return Err(CliError::field("target_n", "needs at least one value"));
        }
        for &t in &targets {
            common::positive("target_n", t)?;
        }
        let (nx, ny) = quadrature_grid(self.nx, self.ny)?;
        let cfg = StudyConfig {
            scenario: self.scenario.unwrap_or(Scenario::A),
            process: self.process.unwrap_or(Process::Poisson),
            target_n: targets,
            m: common::at_least("m", self.m.unwrap_or(100), 1)?,
            seed: self.seed.unwrap_or(1),
            k,
            method,
            n_lambda: solver.path_length,
            lambda_min_ratio: solver.lambda_min_ratio,
            nx,
            ny,
            covariate: self.covariate,
            mean_clusters: common::positive("mean_clusters", self.mean_clusters.unwrap_or(100.0))?,
            offspring_sd: common::positive("offspring_sd", self.offspring_sd.unwrap_or(30.0))?,
            baseline: self.baseline,
            out: common::required("out", self.out)?,
        };
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub process: Process,
    pub target_n: Vec<f64>,
    pub m: usize,
    pub seed: u64,
    pub k: usize,
    pub method: Method,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub nx: usize,
    pub ny: usize,
    pub covariate: Option<PathBuf>,
    pub mean_clusters: f64,
    pub offspring_sd: f64,
    pub baseline: bool,
    pub out: PathBuf,
}

impl StudyConfig {
    /// Defaults for every field, writing to `out`.
    pub fn new(out: impl Into<PathBuf>) -> Self {
        StudyArgs { out: Some(out.into()), ..StudyArgs::default() }.resolve().expect("defaults are valid")
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig { path_length: self.n_lambda, lambda_min_ratio: self.lambda_min_ratio, ..SolverConfig::default() }
    }

    fn thomas(&self, target: f64) -> Option<ThomasConfig> {
        (self.process == Process::Thomas).then_some(ThomasConfig {
            mean_clusters: self.mean_clusters,
            offspring_sd: self.offspring_sd,
            target_count: target,
        })
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub target_n: f64,
    pub replicate: usize,
    pub seed: u64,
    pub n_points: usize,
    pub intercept: f64,
    /// Euclidean distance between estimated and true coefficient vectors.
    pub psi_error: f64,
    pub support: usize,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: f64,
    pub auc_baseline: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub const CSV_HEADER: &'static str =
        "process,target_n,replicate,seed,n_points,intercept,psi_error,support,tpr,fpr,auc,auc_baseline,converged,error";

    fn write_csv_row<W: Write>(&self, process: Process, mut out: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.10e}"));
        writeln!(
            out,
            "{process},{},{},{},{},{:.10e},{:.10e},{},{},{},{:.10e},{},{},{}",
            self.target_n,
            self.replicate,
            self.seed,
            self.n_points,
            self.intercept,
            self.psi_error,
            self.support,
            opt(self.tpr),
            opt(self.fpr),
            self.auc,
            opt(self.auc_baseline),
            u8::from(self.converged),
            self.error.as_deref().map_or_else(|| "NA".to_string(), |e| format!("\"{}\"", e.replace('"', "'"))),
        )
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Mean AUC of one method at one expected count.
#[derive(Debug, Clone, Serialize)]
pub struct AucRow {
    pub target_n: f64,
    pub method: String,
    pub mean_auc: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelInfo {
    pub target_n: f64,
    pub intercept: f64,
    pub expected_count: f64,
    pub thomas_correction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub reports: Vec<ReplicateReport>,
    pub replicates: Vec<ReplicateRecord>,
    pub auc: Vec<AucRow>,
    pub levels: Vec<LevelInfo>,
}

impl StudyOutcome {
    pub fn failures(&self) -> usize {
        self.replicates.iter().filter(|r| r.failed()).count()
    }

    pub fn level(&self, target: f64) -> impl Iterator<Item = &ReplicateRecord> {
        self.replicates.iter().filter(move |r| r.target_n == target)
    }
}

struct Level {
    target: f64,
    expected: f64,
    truth: Spectrum,
    generator: Generator,
    true_support: Vec<usize>,
}

struct Context<'a> {
    cfg: &'a StudyConfig,
    covariate: &'a Covariate,
    order: &'a FrequencyOrder,
    solver: SolverConfig,
    options: SchemeOptions,
    estimates_dir: PathBuf,
}

/// Runs the study and writes `report.csv`, `replicates.csv`, `auc.csv`,
/// one truth spectrum per level, one estimate per replicate and a manifest.
pub fn run_study(cfg: &StudyConfig) -> CliResult<StudyOutcome> {
    let covariate = Covariate::load(cfg.covariate.as_deref())?;
    let order = spiral_order(cfg.k);
    let shape = cfg.scenario.beta(0.0);
    let mut levels = Vec::with_capacity(cfg.target_n.len());
    for &target in &cfg.target_n {
        let (truth, map) = covariate.calibrate(&shape, target)?;
        let true_support = coefficient_support(&truth, &order);
        let expected = map.expected_count();
        levels.push(Level { target, expected, truth, generator: Generator::new(map, cfg.thomas(target))?, true_support });
    }

    common::create_dir(&cfg.out)?;
    let ctx = Context {
        cfg,
        covariate: &covariate,
        order: &order,
        solver: cfg.solver(),
        options: SchemeOptions { parallelism: Parallelism::Sequential, ..SchemeOptions::grid(cfg.nx, cfg.ny) },
        estimates_dir: cfg.out.join("estimates"),
    };
    common::create_dir(&ctx.estimates_dir)?;
    for level in &levels {
        let name = format!("truth_n{}.csv", level.target);
        common::write_file(&cfg.out.join(name), |out| io::write_spectrum(&level.truth, out))?;
    }

    let m = cfg.m;
    let results: Vec<CliResult<(ReplicateRecord, Option<ReplicateEstimate>)>> = (0..levels.len() * m)
        .into_par_iter()
        .map(|i| run_replicate(&ctx, &levels[i / m], i % m))
        .collect();
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut reports = Vec::new();
    let mut aucs = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        let chunk = &results[li * m..(li + 1) * m];
        let ok: Vec<&(ReplicateRecord, Option<ReplicateEstimate>)> = chunk.iter().filter(|(r, e)| !r.failed() && e.is_some()).collect();
        if ok.len() < chunk.len() {
            log::warn!("{} of {m} replicates failed at target {}", chunk.len() - ok.len(), level.target);
        }
        if ok.is_empty() {
            continue;
        }
        let estimates: Vec<ReplicateEstimate> = ok.iter().map(|(_, e)| e.clone().expect("filtered")).collect();
        reports.push(ReplicateReport::aggregate(
            cfg.scenario,
            cfg.method.kind(),
            &order,
            level.target,
            &level.truth,
            &level.true_support,
            &estimates,
        )?);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let fitted: Vec<f64> = ok.iter().map(|(r, _)| r.auc).collect();
        aucs.push(AucRow { target_n: level.target, method: cfg.method.kind().to_string(), mean_auc: mean(&fitted), m: fitted.len() });
        if cfg.baseline {
            let base: Vec<f64> = ok.iter().filter_map(|(r, _)| r.auc_baseline).collect();
            if !base.is_empty() {
                aucs.push(AucRow { target_n: level.target, method: "baseline".into(), mean_auc: mean(&base), m: base.len() });
            }
        }
    }

    let outcome = StudyOutcome {
        reports,
        replicates: results.into_iter().map(|(r, _)| r).collect(),
        auc: aucs,
        levels: levels
            .iter()
            .map(|l| LevelInfo {
                target_n: l.target,
                intercept: l.truth.zero(),
                expected_count: l.expected,
                thomas_correction: l.generator.correction(),
            })
            .collect(),
    };
    write_outputs(cfg, &covariate, &outcome)?;
    Ok(outcome)
}

fn run_replicate(ctx: &Context<'_>, level: &Level, m: usize) -> CliResult<(ReplicateRecord, Option<ReplicateEstimate>)> {
    let seed = Seed(ctx.cfg.seed).replicate(m);
    let pattern = level.generator.draw(seed);
    let mut record = ReplicateRecord {
        target_n: level.target,
        replicate: m,
        seed: seed.0,
        n_points: pattern.len(),
        intercept: f64::NAN,
        psi_error: f64::NAN,
        support: 0,
        tpr: None,
        fpr: None,
        auc: f64::NAN,
        auc_baseline: None,
        converged: false,
        error: None,
    };
    let fitted = (|| -> convintensity::Result<(Spectrum, bool)> {
        let scheme = build_scheme(&pattern, &ctx.covariate.spectrum, ctx.order, ctx.options)?;
        let result = estimate(&scheme, ctx.cfg.method, WeightScheme::Adaptive, None, &ctx.solver)?;
        let point = result.selected_point().ok_or(convintensity::Error::SingularDesign)?;
        let kept = scheme.order().expect("spectral scheme has an order");
        let beta = coeffs_to_beta_spectrum(&point.coef, kept)?.restricted_to(ctx.order);
        Ok((beta, point.converged && point.error.is_none()))
    })();
    let (beta, converged) = match fitted {
        Ok(v) => v,
        Err(e) => {
            log::warn!("replicate {m} at target {} failed: {e}", level.target);
            record.error = Some(e.to_string());
            return Ok((record, None));
        }
    };
    let support = coefficient_support(&beta, ctx.order);
    let (tpr, fpr) = tpr_fpr(&support, &level.true_support, 2 * ctx.order.len());
    record.intercept = beta.zero();
    record.psi_error = ctx.order.iter().map(|&k| (beta.get(k) - level.truth.get(k)).norm_sqr()).sum::<f64>().sqrt();
    record.support = support.len();
    record.tpr = tpr;
    record.fpr = fpr;
    record.converged = converged;
    if !pattern.is_empty() {
        record.auc = auc(&ctx.covariate.intensity(&beta)?, &pattern)?;
        if ctx.cfg.baseline {
            match fit_loglinear_baseline(&pattern, &ctx.covariate.raster, ctx.options, &ctx.solver) {
                Ok(fit) => record.auc_baseline = Some(auc(&fit.predict(&ctx.covariate.raster)?.map, &pattern)?),
                Err(e) => log::warn!("baseline fit of replicate {m} at target {} failed: {e}", level.target),
            }
        }
    }
    let name = format!("{}_n{}_{}.csv", ctx.cfg.process, level.target, common::replicate_name("r", m));
    common::write_file(&ctx.estimates_dir.join(name), |out| io::write_spectrum(&beta, out))?;
    Ok((record, Some(ReplicateEstimate { beta, support })))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a StudyConfig,
    covariate: String,
    levels: &'a [LevelInfo],
    failures: usize,
}

fn write_outputs(cfg: &StudyConfig, covariate: &Covariate, outcome: &StudyOutcome) -> CliResult<()> {
    let dir: &Path = &cfg.out;
    common::write_file(&dir.join("report.csv"), |out| Ok(write_reports(&outcome.reports, out)?))?;
    common::write_file(&dir.join("replicates.csv"), |out| {
        writeln!(out, "{}", ReplicateRecord::CSV_HEADER)?;
        for r in &outcome.replicates {
            r.write_csv_row(cfg.process, &mut *out)?;
        }
        Ok(())
    })?;
    common::write_file(&dir.join("auc.csv"), |out| {
        writeln!(out, "target_n,method,mean_auc,m")?;
        for a in &outcome.auc {
            writeln!(out, "{},{},{:.10e},{}", a.target_n, a.method, a.mean_auc, a.m)?;
        }
        Ok(())
    })?;
    common::write_manifest(
        dir,
        &Manifest {
            command: "study",
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            covariate: covariate.source.clone(),
            levels: &outcome.levels,
            failures: outcome.failures(),
        },
    )
}

/// Command entry point: a study with failed replicates still writes its
/// outputs, then reports a numerical failure.
pub fn run(cfg: &StudyConfig) -> CliResult<()> {
    let outcome = run_study(cfg)?;
    match outcome.failures() {
        0 => Ok(()),
        n => Err(CliError::Numerical(format!("{n} replicate fits failed; see replicates.csv"))),
    }
}
