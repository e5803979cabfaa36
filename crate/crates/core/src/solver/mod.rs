//! Maximum likelihood, ridge and lasso fits of the quadrature Poisson
//! likelihood, regularisation paths and CBIC selection.
//!
//! Coefficients are optimised in the standardised coordinates of the scheme.
//! The penalised objective is
//! `l(theta, psi) - n(W) * lambda * sum_j w_j pen(psi_j)` with the intercept
//! left unpenalised.

mod engine;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureScheme;
use engine::{GramCache, Problem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    Ridge,
    Lasso,
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyKind::None => "mle",
            PenaltyKind::Ridge => "ridge",
            PenaltyKind::Lasso => "lasso",
        })
    }
}

/// Penalty on the non-intercept coefficients. A weight of `+inf` forces the
/// coefficient to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl Penalty {
    pub fn none(columns: usize) -> Self {
        Self { kind: PenaltyKind::None, weights: vec![1.0; columns], lambda: 0.0 }
    }

    pub fn ridge(lambda: f64, weights: Vec<f64>) -> Self {
        Self { kind: PenaltyKind::Ridge, weights, lambda }
    }

    pub fn lasso(lambda: f64, weights: Vec<f64>) -> Self {
        Self { kind: PenaltyKind::Lasso, weights, lambda }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    fn validate(&self, columns: usize) -> Result<()> {
        if self.weights.len() != columns {
            return Err(Error::LengthMismatch { expected: columns, actual: self.weights.len() });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidGrid(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::InvalidGrid(format!("penalty weights must be positive, got {w}")));
        }
        Ok(())
    }
}

/// Intercept plus `2K` coefficients. `psi` is kept on the original covariate
/// scale; `scales` records the column standardisation so the scaled view is
/// `psi[j] * scales[j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientVector {
    pub intercept: f64,
    pub psi: Vec<f64>,
    pub scales: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(intercept: f64, psi: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if psi.len() != scales.len() {
            return Err(Error::LengthMismatch { expected: psi.len(), actual: scales.len() });
        }
        Ok(Self { intercept, psi, scales })
    }

    /// Build from coefficients in standardised coordinates.
    pub fn from_scaled(intercept: f64, scaled: &[f64], scales: &[f64]) -> Self {
        let psi = scaled.iter().zip(scales).map(|(b, s)| if *b == 0.0 { 0.0 } else { b / s }).collect();
        Self { intercept, psi, scales: scales.to_vec() }
    }

    pub fn zeros(intercept: f64, scales: &[f64]) -> Self {
        Self { intercept, psi: vec![0.0; scales.len()], scales: scales.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn unscaled(&self) -> &[f64] {
        &self.psi
    }

    pub fn scaled(&self) -> Vec<f64> {
        self.psi.iter().zip(&self.scales).map(|(p, s)| p * s).collect()
    }

    /// Number of nonzero coefficients (the intercept excluded).
    pub fn support_size(&self) -> usize {
        self.psi.iter().filter(|v| **v != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.psi.len()).filter(|&j| self.psi[j] != 0.0).collect()
    }

    /// Count of coefficients whose standardised magnitude exceeds `threshold`.
    pub fn support_above(&self, threshold: f64) -> usize {
        self.scaled().iter().filter(|v| v.abs() > threshold).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Outer convergence: largest coefficient change in standardised units.
    pub tolerance: f64,
    /// Outer convergence: largest KKT violation of the objective over `n(W)`.
    pub kkt_tolerance: f64,
    pub inner_tolerance: f64,
    pub max_inner_sweeps: usize,
    pub gradient_floor: f64,
    /// Largest number of coefficient columns accepted by [`fit_mle`].
    pub mle_column_cap: usize,
    pub path_length: usize,
    pub lambda_min_ratio: f64,
    /// Stage-one ridge grid starts at this multiple of the lasso `lambda_max`.
    pub ridge_lambda_factor: f64,
    pub ridge_support_threshold: f64,
    pub zero_weight_threshold: f64,
    /// Stop a path once the log-likelihood has saturated.
    pub early_stop: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-7,
            kkt_tolerance: 1e-9,
            inner_tolerance: 1e-10,
            max_inner_sweeps: 1_000,
            gradient_floor: 1e-12,
            mle_column_cap: 48,
            path_length: 100,
            lambda_min_ratio: 1e-4,
            ridge_lambda_factor: 1e3,
            ridge_support_threshold: 1e-8,
            zero_weight_threshold: 1e-10,
            early_stop: true,
        }
    }
}

/// A single optimisation.
#[derive(Debug, Clone)]
pub struct Fit {
    pub coef: CoefficientVector,
    pub loglik: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt: f64,
    pub gradient_norm: f64,
    /// Penalised objective after every outer iteration, starting point first.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub coef: CoefficientVector,
    pub loglik: f64,
    pub support: usize,
    pub cbic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub kind: PenaltyKind,
    pub weights: Vec<f64>,
    pub path: Vec<PathPoint>,
    pub selected: Option<usize>,
    /// Preliminary ridge path used to build the adaptive weights.
    pub stage_one: Option<Box<FitResult>>,
}

impl FitResult {
    pub fn selected_point(&self) -> Option<&PathPoint> {
        self.selected.map(|i| &self.path[i])
    }

    pub fn all_converged(&self) -> bool {
        self.path.iter().all(|p| p.converged && p.error.is_none())
    }
}

/// `-2 l + s log n(W)`.
pub fn cbic(loglik: f64, support: usize, n_w: usize) -> f64 {
    -2.0 * loglik + support as f64 * (n_w.max(1) as f64).ln()
}

fn penalty_scale(scheme: &QuadratureScheme) -> f64 {
    (scheme.n_data() as f64).max(1.0)
}

fn null_intercept(scheme: &QuadratureScheme) -> f64 {
    ((scheme.n_data() as f64).max(1e-3) / scheme.total_weight()).ln()
}

fn finish(problem: &Problem<'_>, outcome: engine::Outcome) -> Fit {
    let scales = problem.scheme.scales();
    let state = outcome.state;
    Fit {
        coef: CoefficientVector::from_scaled(state.theta, &state.beta, scales),
        loglik: state.loglik,
        objective: state.objective,
        converged: outcome.converged,
        iterations: outcome.iterations,
        kkt: outcome.kkt,
        gradient_norm: outcome.gradient_norm,
        trace: outcome.trace,
    }
}

fn start_state(problem: &Problem<'_>, warm: Option<&CoefficientVector>) -> Result<State> {
    let p = problem.scheme.n_columns();
    let state = match warm {
        Some(c) => {
            if c.len() != p {
                return Err(Error::LengthMismatch { expected: p, actual: c.len() });
            }
            let mut beta = c.scaled();
            for (b, w) in beta.iter_mut().zip(problem.weights) {
                if w.is_infinite() {
                    *b = 0.0;
                }
            }
            problem.state(c.intercept, beta)
        }
        None => problem.state(null_intercept(problem.scheme), vec![0.0; p]),
    };
    if !state.objective.is_finite() {
        return Err(Error::NonfiniteObjective);
    }
    Ok(state)
}

/// Unpenalised maximum likelihood by Newton iterations with step halving.
pub fn fit_mle(scheme: &QuadratureScheme, cfg: &SolverConfig) -> Result<Fit> {
    let p = scheme.n_columns();
    if p > cfg.mle_column_cap {
        return Err(Error::TooManyColumns { columns: p, cap: cfg.mle_column_cap });
    }
    let weights = vec![1.0; p];
    let problem = Problem { scheme, kind: PenaltyKind::None, weights: &weights, lambda: 0.0, scale: penalty_scale(scheme) };
    let state = start_state(&problem, None)?;
    let outcome = problem.solve_smooth(state, cfg, None)?;
    Ok(finish(&problem, outcome))
}

/// Maximise the penalised likelihood for a single `lambda`, optionally warm
/// started from `warm` (a coefficient vector on this scheme).
pub fn fit_penalized(scheme: &QuadratureScheme, penalty: &Penalty, cfg: &SolverConfig, warm: Option<&CoefficientVector>) -> Result<Fit> {
    penalty.validate(scheme.n_columns())?;
    fit_penalized_cached(scheme, penalty, cfg, warm, &mut GramCache::default())
}

fn fit_penalized_cached(
    scheme: &QuadratureScheme,
    penalty: &Penalty,
    cfg: &SolverConfig,
    warm: Option<&CoefficientVector>,
    cache: &mut GramCache,
) -> Result<Fit> {
    let problem = Problem { scheme, kind: penalty.kind, weights: &penalty.weights, lambda: penalty.lambda, scale: penalty_scale(scheme) };
    let state = start_state(&problem, warm)?;
    let outcome = match penalty.kind {
        PenaltyKind::Lasso => problem.solve_lasso(state, cfg)?,
        PenaltyKind::Ridge => problem.solve_smooth(state, cfg, Some(cache))?,
        PenaltyKind::None => problem.solve_smooth(state, cfg, None)?,
    };
    Ok(finish(&problem, outcome))
}

/// Largest KKT violation of `coef` for `penalty`, in units of the objective
/// divided by `n(W)`.
pub fn kkt_residual(scheme: &QuadratureScheme, penalty: &Penalty, coef: &CoefficientVector) -> Result<f64> {
    penalty.validate(scheme.n_columns())?;
    let scaled = coef.scaled();
    let (g_theta, mut g) = scheme.gradient(coef.intercept, &scaled);
    for (gj, w) in g.iter_mut().zip(&penalty.weights) {
        if w.is_infinite() {
            *gj = 0.0;
        }
    }
    let problem = Problem { scheme, kind: penalty.kind, weights: &penalty.weights, lambda: penalty.lambda, scale: penalty_scale(scheme) };
    Ok(problem.kkt_residual(g_theta, &g, &scaled))
}

/// Smallest `lambda` for which the lasso solution is identically zero.
pub fn lambda_max(scheme: &QuadratureScheme, weights: &[f64]) -> Result<f64> {
    let p = scheme.n_columns();
    if weights.len() != p {
        return Err(Error::LengthMismatch { expected: p, actual: weights.len() });
    }
    if !weights.iter().any(|w| w.is_finite()) {
        return Err(Error::AllInfiniteWeights);
    }
    let problem = Problem { scheme, kind: PenaltyKind::Lasso, weights, lambda: 0.0, scale: penalty_scale(scheme) };
    let state = problem.state(null_intercept(scheme), vec![0.0; p]);
    let (_, g) = scheme.gradient_from_eta(&state.eta);
    let n = penalty_scale(scheme);
    Ok(g.iter()
        .zip(weights)
        .filter(|(_, w)| w.is_finite())
        .map(|(gj, w)| gj.abs() / (n * w))
        .fold(0.0, f64::max))
}

fn log_grid(top: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|i| top * (step * i as f64).exp()).collect()
}

/// Descending lasso grid from `lambda_max` down to `lambda_min_ratio * lambda_max`.
pub fn lambda_grid(scheme: &QuadratureScheme, weights: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let top = lambda_max(scheme, weights)?;
    Ok(log_grid(top, cfg.lambda_min_ratio, cfg.path_length))
}

/// Descending ridge grid: the lasso grid shifted up by `ridge_lambda_factor`.
pub fn ridge_lambda_grid(scheme: &QuadratureScheme, weights: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let top = lambda_max(scheme, weights)? * cfg.ridge_lambda_factor;
    Ok(log_grid(top, cfg.lambda_min_ratio, cfg.path_length))
}

/// Run `penalty` over `lambdas` (descending) with warm starts and select the
/// CBIC minimiser. Failures are recorded per point and the path continues
/// from the last successful fit.
pub fn fit_path(scheme: &QuadratureScheme, penalty: &Penalty, lambdas: &[f64], cfg: &SolverConfig) -> Result<FitResult> {
    penalty.validate(scheme.n_columns())?;
    let n = scheme.n_data();
    let mut cache = GramCache::default();
    let mut warm: Option<CoefficientVector> = None;
    let mut path: Vec<PathPoint> = Vec::with_capacity(lambdas.len());
    let mut null_loglik = None;
    for &lambda in lambdas {
        let pen = penalty.with_lambda(lambda);
        match fit_penalized_cached(scheme, &pen, cfg, warm.as_ref(), &mut cache) {
            Ok(fit) => {
                let support = match penalty.kind {
                    PenaltyKind::Ridge => fit.coef.support_above(cfg.ridge_support_threshold),
                    _ => fit.coef.support_size(),
                };
                if !fit.converged {
                    log::warn!("{} fit at lambda {lambda:.4e} stopped after {} iterations (kkt {:.2e})", penalty.kind, fit.iterations, fit.kkt);
                }
                let point = PathPoint {
                    lambda,
                    cbic: cbic(fit.loglik, support, n),
                    loglik: fit.loglik,
                    support,
                    converged: fit.converged,
                    iterations: fit.iterations,
                    kkt: fit.kkt,
                    coef: fit.coef.clone(),
                    error: None,
                };
                warm = Some(fit.coef);
                null_loglik.get_or_insert(point.loglik);
                path.push(point);
            }
            Err(e) => {
                log::warn!("{} fit at lambda {lambda:.4e} failed: {e}", penalty.kind);
                let coef = warm.clone().unwrap_or_else(|| CoefficientVector::zeros(null_intercept(scheme), scheme.scales()));
                path.push(PathPoint {
                    lambda,
                    loglik: f64::NAN,
                    support: coef.support_size(),
                    cbic: f64::NAN,
                    coef,
                    converged: false,
                    iterations: 0,
                    kkt: f64::NAN,
                    error: Some(e.to_string()),
                });
            }
        }
        if cfg.early_stop && saturated(&path, null_loglik) {
            break;
        }
    }
    let selected = path
        .iter()
        .enumerate()
        .filter(|(_, p)| p.error.is_none() && p.cbic.is_finite())
        .fold(None::<(usize, f64)>, |best, (i, p)| match best {
            Some((_, c)) if c <= p.cbic => best,
            _ => Some((i, p.cbic)),
        })
        .map(|(i, _)| i);
    Ok(FitResult { kind: penalty.kind, weights: penalty.weights.clone(), path, selected, stage_one: None })
}

/// The log-likelihood gain of the last step is negligible relative to the
/// total gain over the null fit.
fn saturated(path: &[PathPoint], null_loglik: Option<f64>) -> bool {
    let (Some(null), [.., prev, last]) = (null_loglik, path) else {
        return false;
    };
    if path.len() < 5 || last.error.is_some() || prev.error.is_some() {
        return false;
    }
    let explained = last.loglik - null;
    explained > 0.0 && (last.loglik - prev.loglik) < 1e-5 * explained
}

/// Two-stage adaptive fit: a ridge path with unit weights selects `psi^R` by
/// CBIC, then `kind` runs with weights `1/|psi^R_j|` (standardised units).
pub fn fit_adaptive(scheme: &QuadratureScheme, kind: PenaltyKind, cfg: &SolverConfig) -> Result<FitResult> {
    fit_adaptive_on(scheme, kind, cfg, None)
}

/// [`fit_adaptive`] with the second-stage grid given explicitly (`None` uses
/// the default grid for the adaptive weights).
pub fn fit_adaptive_on(scheme: &QuadratureScheme, kind: PenaltyKind, cfg: &SolverConfig, lambdas: Option<&[f64]>) -> Result<FitResult> {
    let p = scheme.n_columns();
    if kind == PenaltyKind::None {
        let fit = fit_mle(scheme, cfg)?;
        let support = fit.coef.support_size();
        let point = PathPoint {
            lambda: 0.0,
            cbic: cbic(fit.loglik, support, scheme.n_data()),
            loglik: fit.loglik,
            support,
            converged: fit.converged,
            iterations: fit.iterations,
            kkt: fit.kkt,
            coef: fit.coef,
            error: None,
        };
        return Ok(FitResult { kind, weights: vec![1.0; p], path: vec![point], selected: Some(0), stage_one: None });
    }

    let unit = vec![1.0; p];
    let stage_one = fit_path(scheme, &Penalty::ridge(0.0, unit.clone()), &ridge_lambda_grid(scheme, &unit, cfg)?, cfg)?;
    let ridge = stage_one.selected_point().ok_or(Error::SingularDesign)?;
    let weights = adaptive_weights(&ridge.coef.scaled(), cfg.zero_weight_threshold)?;

    let lambdas = match (lambdas, kind) {
        (Some(l), _) => l.to_vec(),
        (None, PenaltyKind::Lasso) => lambda_grid(scheme, &weights, cfg)?,
        (None, _) => ridge_lambda_grid(scheme, &weights, cfg)?,
    };
    let penalty = Penalty { kind, weights, lambda: 0.0 };
    let mut result = fit_path(scheme, &penalty, &lambdas, cfg)?;
    result.stage_one = Some(Box::new(stage_one));
    Ok(result)
}

/// `1/|psi_j|`, or `+inf` when `|psi_j|` is below `threshold`.
pub fn adaptive_weights(psi: &[f64], threshold: f64) -> Result<Vec<f64>> {
    let w: Vec<f64> = psi.iter().map(|v| if v.abs() < threshold { f64::INFINITY } else { 1.0 / v.abs() }).collect();
    if !w.iter().any(|v| v.is_finite()) {
        return Err(Error::AllInfiniteWeights);
    }
    Ok(w)
}
