//! `fit`: regularisation path, selected coefficients, kernel and intensity.

use std::path::PathBuf;

use clap::Args;
use convintensity::solver::{fit_path, ridge_lambda_grid};
use convintensity::spectral::Frequency;
use convintensity::{
    build_scheme, coeffs_to_beta_spectrum, fit_adaptive, fit_adaptive_on, ifft2, io, lambda_grid, spiral_order, FitResult, Penalty,
    PenaltyKind, SchemeOptions, SolverConfig, Spectrum,
};
use serde::{Deserialize, Serialize};

use crate::common::{self, Covariate, Method, WeightScheme};
use crate::error::{CliError, CliResult};

pub const DEFAULT_K: usize = 112;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Point pattern CSV (header x,y).
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Covariate grid file [default: built-in synthetic image].
    #[arg(long)]
    pub covariate: Option<PathBuf>,
    /// Number of spiral frequencies [default: 112].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Explicit lambda values (comma separated), replacing the default grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Length of the default lambda grid [default: 100].
    #[arg(long)]
    pub n_lambda: Option<usize>,
    /// Smallest over largest lambda of the default grid [default: 1e-4].
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub weights: Option<WeightScheme>,
    /// Quadrature grid columns [default: 128].
    #[arg(long)]
    pub nx: Option<usize>,
    /// Quadrature grid rows [default: 96].
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write PGM previews.
    #[arg(long)]
    pub pgm: bool,
    /// Blank kernel preview values below this fraction of the peak magnitude.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl FitArgs {
    pub fn merge(&mut self, mut file: FitArgs) {
        merge!(self, file; pattern, covariate, k, method, lambda, n_lambda, lambda_min_ratio, weights, nx, ny, out, threshold);
        self.pgm |= file.pgm;
    }

    pub fn resolve(self) -> CliResult<FitConfig> {
        let solver = solver_config(self.n_lambda, self.lambda_min_ratio)?;
        let method = self.method.unwrap_or(Method::Lasso);
        let k = common::at_least("k", self.k.unwrap_or(DEFAULT_K), 1)?;
        check_method_k(method, k, &solver)?;
        if let Some(l) = &self.lambda {
            if l.is_empty() {
                return Err(CliError::field("lambda", "needs at least one value"));
            }
            if let Some(v) = l.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(CliError::field("lambda", format!("values must be finite and non-negative, got {v}")));
            }
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::field("threshold", format!("must lie in [0, 1], got {t}")));
            }
        }
        let (nx, ny) = quadrature_grid(self.nx, self.ny)?;
        Ok(FitConfig {
            pattern: common::required("pattern", self.pattern)?,
            covariate: self.covariate,
            k,
            method,
            lambda: self.lambda,
            n_lambda: solver.path_length,
            lambda_min_ratio: solver.lambda_min_ratio,
            weights: self.weights.unwrap_or(WeightScheme::Adaptive),
            nx,
            ny,
            out: common::required("out", self.out)?,
            pgm: self.pgm,
            threshold: self.threshold,
        })
    }
}

pub fn solver_config(n_lambda: Option<usize>, ratio: Option<f64>) -> CliResult<SolverConfig> {
    let d = SolverConfig::default();
    let ratio = ratio.unwrap_or(d.lambda_min_ratio);
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CliError::field("lambda_min_ratio", format!("must lie in (0, 1), got {ratio}")));
    }
    Ok(SolverConfig { path_length: common::at_least("n_lambda", n_lambda.unwrap_or(d.path_length), 1)?, lambda_min_ratio: ratio, ..d })
}

/// Unpenalised fits are only offered for small `K`.
pub fn check_method_k(method: Method, k: usize, solver: &SolverConfig) -> CliResult<()> {
    if method == Method::Mle && 2 * k > solver.mle_column_cap {
        return Err(CliError::field(
            "k",
            format!("method mle supports at most {} frequencies, got {k}; use ridge or lasso", solver.mle_column_cap / 2),
        ));
    }
    Ok(())
}

pub fn quadrature_grid(nx: Option<usize>, ny: Option<usize>) -> CliResult<(usize, usize)> {
    let (dx, dy) = convintensity::quadrature::DEFAULT_QUADRATURE_GRID;
    Ok((common::at_least("nx", nx.unwrap_or(dx), 8)?, common::at_least("ny", ny.unwrap_or(dy), 8)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct FitConfig {
    pub pattern: PathBuf,
    pub covariate: Option<PathBuf>,
    pub k: usize,
    pub method: Method,
    pub lambda: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub weights: WeightScheme,
    pub nx: usize,
    pub ny: usize,
    pub out: PathBuf,
    pub pgm: bool,
    pub threshold: Option<f64>,
}

impl FitConfig {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig { path_length: self.n_lambda, lambda_min_ratio: self.lambda_min_ratio, ..SolverConfig::default() }
    }
}

/// Runs the requested estimator on a built scheme.
pub fn estimate(
    scheme: &convintensity::QuadratureScheme,
    method: Method,
    weights: WeightScheme,
    lambda: Option<&[f64]>,
    solver: &SolverConfig,
) -> convintensity::Result<FitResult> {
    let kind = method.kind();
    if kind == PenaltyKind::None {
        return fit_adaptive(scheme, kind, solver);
    }
    match weights {
        WeightScheme::Adaptive => fit_adaptive_on(scheme, kind, solver, lambda),
        WeightScheme::Unit => {
            let unit = vec![1.0; scheme.n_columns()];
            let grid = match (lambda, kind) {
                (Some(l), _) => l.to_vec(),
                (None, PenaltyKind::Lasso) => lambda_grid(scheme, &unit, solver)?,
                (None, _) => ridge_lambda_grid(scheme, &unit, solver)?,
            };
            fit_path(scheme, &Penalty { kind, weights: unit, lambda: 0.0 }, &grid, solver)
        }
    }
}

/// `beta` without its zero term, evaluated on a grid.
pub fn kernel_surface(beta: &Spectrum, nx: usize, ny: usize, window: convintensity::Window) -> CliResult<convintensity::Raster> {
    let mut kernel = beta.clone();
    kernel.set_zero(0.0);
    Ok(ifft2(&kernel, nx, ny, window)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a FitConfig,
    covariate: String,
    n_points: usize,
    n_columns: usize,
    dropped_frequencies: Vec<Frequency>,
    path_length: usize,
    selected: Option<Selected>,
    all_converged: bool,
    intensity_clamped: Option<bool>,
}

#[derive(Serialize)]
struct Selected {
    index: usize,
    lambda: f64,
    loglik: f64,
    support: usize,
    cbic: f64,
    converged: bool,
    kkt: f64,
}

pub fn run(cfg: &FitConfig) -> CliResult<()> {
    let covariate = Covariate::load(cfg.covariate.as_deref())?;
    let pattern = common::read_pattern(&cfg.pattern, covariate.window())?;
    let options = SchemeOptions::grid(cfg.nx, cfg.ny);
    let scheme = build_scheme(&pattern, &covariate.spectrum, &spiral_order(cfg.k), options)?;
    let order = scheme.order().expect("spectral scheme has an order").clone();
    let solver = cfg.solver();

    common::create_dir(&cfg.out)?;
    let result = estimate(&scheme, cfg.method, cfg.weights, cfg.lambda.as_deref(), &solver);
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            write_fit_manifest(cfg, &covariate, &scheme, None, None)?;
            return Err(e.into());
        }
    };
    common::write_file(&cfg.out.join("path.csv"), |out| io::write_path(&result, out))?;
    if let Some(stage) = &result.stage_one {
        common::write_file(&cfg.out.join("ridge_path.csv"), |out| io::write_path(stage, out))?;
    }
    let Some(point) = result.selected_point() else {
        write_fit_manifest(cfg, &covariate, &scheme, Some(&result), None)?;
        return Err(CliError::Numerical("no point of the regularisation path could be fitted".into()));
    };

    let beta = coeffs_to_beta_spectrum(&point.coef, &order)?;
    let r = &covariate.raster;
    let surface = kernel_surface(&beta, r.nx(), r.ny(), r.window())?;
    common::write_file(&cfg.out.join("coefficients.csv"), |out| io::write_coefficients(&point.coef, &order, out))?;
    common::write_file(&cfg.out.join("beta.csv"), |out| io::write_spectrum(&beta, out))?;
    common::write_file(&cfg.out.join("beta_surface.grid"), |out| io::write_grid(&surface, out))?;
    if cfg.pgm {
        common::write_pgm(&cfg.out.join("beta_surface.pgm"), &surface, cfg.threshold)?;
    }
    let prediction = match convintensity::predict_intensity(&beta, &covariate.spectrum, r.nx(), r.ny(), r.window()) {
        Ok(p) => p,
        Err(e) => {
            write_fit_manifest(cfg, &covariate, &scheme, Some(&result), None)?;
            return Err(CliError::Numerical(format!("intensity of the selected fit: {e}")));
        }
    };
    common::write_file(&cfg.out.join("intensity.grid"), |out| io::write_grid(prediction.map.raster(), out))?;
    if cfg.pgm {
        common::write_pgm(&cfg.out.join("intensity.pgm"), prediction.map.raster(), None)?;
    }
    write_fit_manifest(cfg, &covariate, &scheme, Some(&result), Some(prediction.clamped))?;

    if !point.converged || point.error.is_some() {
        return Err(CliError::Numerical(format!(
            "selected fit at lambda {:e} did not converge (kkt {:e})",
            point.lambda, point.kkt
        )));
    }
    Ok(())
}

fn write_fit_manifest(
    cfg: &FitConfig,
    covariate: &Covariate,
    scheme: &convintensity::QuadratureScheme,
    result: Option<&FitResult>,
    clamped: Option<bool>,
) -> CliResult<()> {
    let selected = result.and_then(|r| r.selected.map(|i| (i, &r.path[i]))).map(|(index, p)| Selected {
        index,
        lambda: p.lambda,
        loglik: p.loglik,
        support: p.support,
        cbic: p.cbic,
        converged: p.converged,
        kkt: p.kkt,
    });
    common::write_manifest(
        &cfg.out,
        &Manifest {
            command: "fit",
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            covariate: covariate.source.clone(),
            n_points: scheme.n_data(),
            n_columns: scheme.n_columns(),
            dropped_frequencies: scheme.dropped_frequencies().to_vec(),
            path_length: result.map_or(0, |r| r.path.len()),
            selected,
            all_converged: result.is_some_and(|r| r.all_converged()),
            intensity_clamped: clamped,
        },
    )
}
