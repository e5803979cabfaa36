//! Newton / IRLS iterations on the quadrature log-likelihood.
//!
//! Every outer iteration forms the weighted least-squares surrogate of the
//! log-likelihood at the current intensity (gradient plus weighted Gram
//! matrix) and solves the penalised surrogate:
//!
//! * no penalty or ridge: one linear solve (Cholesky);
//! * lasso: cyclic coordinate descent with soft-thresholding, run in Gram
//!   space over a working set grown from KKT violators.
//!
//! The candidate step is then halved until the true penalised objective does
//! not decrease.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{PenaltyKind, SolverConfig};
use crate::error::{Error, Result};
use crate::quadrature::{MassSpectrum, QuadratureScheme};

/// Relative slack allowed when checking that the objective did not decrease.
const MONOTONE_SLACK: f64 = 1e-12;
const MAX_HALVINGS: usize = 60;

pub(crate) struct Problem<'a> {
    pub scheme: &'a QuadratureScheme,
    pub kind: PenaltyKind,
    pub weights: &'a [f64],
    pub lambda: f64,
    /// Multiplier of the penalty, `n(W)` (at least 1).
    pub scale: f64,
}

/// Current iterate in standardised coordinates plus cached predictor.
#[derive(Debug, Clone)]
pub(crate) struct State {
    pub theta: f64,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub loglik: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub state: State,
    pub converged: bool,
    pub iterations: usize,
    pub kkt: f64,
    pub gradient_norm: f64,
    pub trace: Vec<f64>,
}

/// Gram matrix reused between iterations (and along a path) for smooth
/// penalties. `age` counts the iterations since it was formed.
#[derive(Debug, Clone, Default)]
pub(crate) struct GramCache {
    gram: Option<DMatrix<f64>>,
    age: usize,
    /// Factor of the penalised Gram for the recorded `lambda`.
    factor: Option<(f64, Cholesky<f64, nalgebra::Dyn>)>,
}

impl<'a> Problem<'a> {
    fn threshold(&self, j: usize) -> f64 {
        self.scale * self.lambda * self.weights[j]
    }

    fn is_free(&self, j: usize) -> bool {
        self.weights[j].is_finite()
    }

    pub fn penalty(&self, beta: &[f64]) -> f64 {
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::Ridge => beta
                .iter()
                .enumerate()
                .filter(|&(j, &b)| b != 0.0 && self.is_free(j))
                .map(|(j, &b)| 0.5 * self.threshold(j) * b * b)
                .sum(),
            PenaltyKind::Lasso => beta
                .iter()
                .enumerate()
                .filter(|&(j, &b)| b != 0.0 && self.is_free(j))
                .map(|(j, &b)| self.threshold(j) * b.abs())
                .sum(),
        }
    }

    pub fn state(&self, theta: f64, beta: Vec<f64>) -> State {
        let eta = self.scheme.linear_predictor(theta, &beta);
        let loglik = self.scheme.loglik_from_eta(&eta);
        let objective = loglik - self.penalty(&beta);
        State { theta, beta, eta, loglik, objective }
    }

    /// Unpenalised gradient, the per-row mass `w exp(eta)` and its pixel
    /// spectrum (structured schemes only).
    fn gradient(&self, state: &State) -> (f64, Vec<f64>, Vec<f64>, Option<MassSpectrum>) {
        let mass: Vec<f64> = state
            .eta
            .iter()
            .zip(self.scheme.weights())
            .map(|(&e, &w)| w * e.exp())
            .collect();
        let free: Vec<usize> = (0..self.scheme.n_columns()).filter(|&j| self.is_free(j)).collect();
        let (total, moments, ms) = self.scheme.mass_moments(&mass, &free);
        let mut g = vec![0.0; self.scheme.n_columns()];
        for (&j, m) in free.iter().zip(moments) {
            g[j] = self.scheme.data_sums()[j] - m;
        }
        (self.scheme.n_data() as f64 - total, g, mass, ms)
    }

    /// Largest violation of the stationarity conditions of the objective
    /// divided by `n(W)`.
    pub fn kkt_residual(&self, g_theta: f64, g: &[f64], beta: &[f64]) -> f64 {
        let mut worst = g_theta.abs() / self.scale;
        for j in 0..g.len() {
            if !self.is_free(j) {
                continue;
            }
            let gj = g[j] / self.scale;
            let thr = self.lambda * self.weights[j];
            let r = match self.kind {
                PenaltyKind::None => gj.abs(),
                PenaltyKind::Ridge => (gj - thr * beta[j]).abs(),
                PenaltyKind::Lasso => {
                    if beta[j] == 0.0 {
                        (gj.abs() - thr).max(0.0)
                    } else {
                        (gj - thr * beta[j].signum()).abs()
                    }
                }
            };
            worst = worst.max(r);
        }
        worst
    }

    fn penalised_gradient_norm(&self, g_theta: f64, g: &[f64], beta: &[f64]) -> f64 {
        let mut s = g_theta * g_theta;
        for j in 0..g.len() {
            if !self.is_free(j) {
                continue;
            }
            let gj = match self.kind {
                PenaltyKind::Ridge => g[j] - self.threshold(j) * beta[j],
                _ => g[j],
            };
            s += gj * gj;
        }
        s.sqrt()
    }

    /// Add the ridge curvature to the diagonal of a Gram matrix over `cols`.
    fn penalised(&self, mut h: DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
        if self.kind == PenaltyKind::Ridge {
            for (a, &j) in cols.iter().enumerate() {
                h[(a + 1, a + 1)] += self.threshold(j);
            }
        }
        h
    }

    /// Step-halving line search along `(d_theta, d)` on `cols`.
    fn line_search(&self, state: &State, d_theta: f64, cols: &[usize], d: &[f64]) -> Result<(State, f64, usize)> {
        let dir = self.scheme.direction(d_theta, cols, d);
        let n_data = self.scheme.n_data();
        let weights = self.scheme.weights();
        let floor = state.objective - MONOTONE_SLACK * state.objective.abs().max(1.0);
        let mut t = 1.0;
        for halvings in 0..MAX_HALVINGS {
            let mut beta = state.beta.clone();
            for (&j, &dj) in cols.iter().zip(d) {
                beta[j] += t * dj;
            }
            let eta: Vec<f64> = state.eta.iter().zip(&dir).map(|(&e, &v)| e + t * v).collect();
            let data: f64 = eta[..n_data].iter().sum();
            let integral: f64 = eta.iter().zip(weights).map(|(&e, &w)| w * e.exp()).sum();
            let loglik = data - integral;
            let objective = loglik - self.penalty(&beta);
            if objective.is_finite() && objective >= floor {
                let theta = state.theta + t * d_theta;
                return Ok((State { theta, beta, eta, loglik, objective }, t, halvings));
            }
            t *= 0.5;
        }
        if state.objective.is_finite() {
            // no ascent possible along this direction: stay put
            Ok((state.clone(), 0.0, MAX_HALVINGS))
        } else {
            Err(Error::NonfiniteObjective)
        }
    }

    /// Newton iterations for the unpenalised or ridge objective.
    ///
    /// With `cache` the Gram matrix may be reused across iterations; it is
    /// refreshed whenever a step needed halving or contraction stalls. Without
    /// a cache every iteration is an exact Newton step.
    pub fn solve_smooth(&self, mut state: State, cfg: &SolverConfig, mut cache: Option<&mut GramCache>) -> Result<Outcome> {
        debug_assert!(self.kind != PenaltyKind::Lasso);
        let cols: Vec<usize> = (0..self.scheme.n_columns()).filter(|&j| self.is_free(j)).collect();
        let mut trace = vec![state.objective];
        let mut prev_step = f64::INFINITY;
        let mut force_refresh = cache.is_none();
        for iter in 0..cfg.max_iterations {
            let (g_theta, g, mass, ms) = self.gradient(&state);
            let gnorm = self.penalised_gradient_norm(g_theta, &g, &state.beta);
            let kkt = self.kkt_residual(g_theta, &g, &state.beta);
            if iter > 0 && prev_step < cfg.tolerance && kkt < cfg.kkt_tolerance {
                return Ok(Outcome { state, converged: true, iterations: iter, kkt, gradient_norm: gnorm, trace });
            }
            if gnorm < cfg.gradient_floor * self.scale {
                return Ok(Outcome { state, converged: true, iterations: iter, kkt, gradient_norm: gnorm, trace });
            }

            let fresh = force_refresh || cache.as_ref().is_none_or(|c| c.gram.is_none());
            let factor = match cache.as_deref_mut() {
                Some(c) if !fresh => {
                    c.age += 1;
                    match &c.factor {
                        Some((lambda, f)) if *lambda == self.lambda => f.clone(),
                        _ => {
                            let f = solve_spd(self.penalised(c.gram.clone().expect("cached gram"), &cols))?;
                            c.factor = Some((self.lambda, f.clone()));
                            f
                        }
                    }
                }
                Some(c) => {
                    let gm = self.scheme.weighted_gram(&cols, &mass, ms.as_ref());
                    let f = solve_spd(self.penalised(gm.clone(), &cols))?;
                    c.gram = Some(gm);
                    c.age = 0;
                    c.factor = Some((self.lambda, f.clone()));
                    f
                }
                None => solve_spd(self.penalised(self.scheme.weighted_gram(&cols, &mass, ms.as_ref()), &cols))?,
            };
            let mut rhs = DVector::zeros(cols.len() + 1);
            rhs[0] = g_theta;
            for (a, &j) in cols.iter().enumerate() {
                rhs[a + 1] = g[j];
                if self.kind == PenaltyKind::Ridge {
                    rhs[a + 1] -= self.threshold(j) * state.beta[j];
                }
            }
            let step = factor.solve(&rhs);
            let d: Vec<f64> = step.iter().skip(1).copied().collect();
            let (next, t, halvings) = self.line_search(&state, step[0], &cols, &d)?;
            let size = t * step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // refresh a lagged Gram when the step had to be cut or convergence is slow
            force_refresh = cache.is_none() || halvings > 0 || (iter > 0 && size > 0.2 * prev_step) || t == 0.0;
            if let Some(c) = cache.as_deref_mut() {
                if c.age >= 6 {
                    force_refresh = true;
                }
            }
            if t == 0.0 && fresh {
                // exact Newton made no progress: at machine precision
                let (g_theta, g, _, _) = self.gradient(&next);
                let kkt = self.kkt_residual(g_theta, &g, &next.beta);
                let gnorm = self.penalised_gradient_norm(g_theta, &g, &next.beta);
                trace.push(next.objective);
                return Ok(Outcome { state: next, converged: kkt < cfg.kkt_tolerance, iterations: iter + 1, kkt, gradient_norm: gnorm, trace });
            }
            prev_step = size;
            state = next;
            trace.push(state.objective);
        }
        let (g_theta, g, _, _) = self.gradient(&state);
        let kkt = self.kkt_residual(g_theta, &g, &state.beta);
        let gnorm = self.penalised_gradient_norm(g_theta, &g, &state.beta);
        Ok(Outcome { state, converged: false, iterations: cfg.max_iterations, kkt, gradient_norm: gnorm, trace })
    }

    /// IRLS + coordinate descent for the (weighted) lasso.
    pub fn solve_lasso(&self, mut state: State, cfg: &SolverConfig) -> Result<Outcome> {
        debug_assert_eq!(self.kind, PenaltyKind::Lasso);
        let p = self.scheme.n_columns();
        let mut active: Vec<usize> = (0..p).filter(|&j| state.beta[j] != 0.0).collect();
        let mut in_set = vec![false; p];
        for &j in &active {
            in_set[j] = true;
        }
        let mut trace = vec![state.objective];
        let mut prev_step = f64::INFINITY;
        for iter in 0..cfg.max_iterations {
            let (g_theta, g, mass, ms) = self.gradient(&state);
            let kkt = self.kkt_residual(g_theta, &g, &state.beta);
            if iter > 0 && prev_step < cfg.tolerance && kkt < cfg.kkt_tolerance {
                let gnorm = self.penalised_gradient_norm(g_theta, &g, &state.beta);
                return Ok(Outcome { state, converged: true, iterations: iter, kkt, gradient_norm: gnorm, trace });
            }
            // grow the working set with every strict KKT violator
            for j in 0..p {
                if !in_set[j] && self.is_free(j) && g[j].abs() > self.threshold(j) * (1.0 + 1e-10) {
                    in_set[j] = true;
                    active.push(j);
                }
            }
            active.sort_unstable();
            let h = self.scheme.weighted_gram(&active, &mass, ms.as_ref());
            let mut grad = Vec::with_capacity(active.len() + 1);
            grad.push(g_theta);
            grad.extend(active.iter().map(|&j| g[j]));
            let mut base = Vec::with_capacity(active.len() + 1);
            base.push(state.theta);
            base.extend(active.iter().map(|&j| state.beta[j]));
            let mut thresholds = Vec::with_capacity(active.len() + 1);
            thresholds.push(0.0);
            thresholds.extend(active.iter().map(|&j| self.threshold(j)));
            // inexact Newton: inner accuracy tracks the outer residual
            let inner_tol = cfg.inner_tolerance.max(1e-2 * kkt * self.scale.sqrt());
            let step = coordinate_descent(&h, &grad, &base, &thresholds, inner_tol, cfg.max_inner_sweeps);
            let (mut next, t, _) = self.line_search(&state, step[0], &active, &step[1..])?;
            // soft-thresholding lands exactly on zero only for a full step
            if t < 1.0 {
                for &j in &active {
                    if next.beta[j].abs() < 1e-300 {
                        next.beta[j] = 0.0;
                    }
                }
            }
            let size = t * step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            state = next;
            trace.push(state.objective);
            if t == 0.0 {
                // no ascent along the Newton direction: as good as it gets
                let (g_theta, g, _, _) = self.gradient(&state);
                let kkt = self.kkt_residual(g_theta, &g, &state.beta);
                let gnorm = self.penalised_gradient_norm(g_theta, &g, &state.beta);
                return Ok(Outcome { state, converged: kkt < cfg.kkt_tolerance, iterations: iter + 1, kkt, gradient_norm: gnorm, trace });
            }
            prev_step = size;
        }
        let (g_theta, g, _, _) = self.gradient(&state);
        let kkt = self.kkt_residual(g_theta, &g, &state.beta);
        let gnorm = self.penalised_gradient_norm(g_theta, &g, &state.beta);
        Ok(Outcome { state, converged: kkt < cfg.kkt_tolerance, iterations: cfg.max_iterations, kkt, gradient_norm: gnorm, trace })
    }
}

fn solve_spd(h: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let max_diag = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = Cholesky::new(h).ok_or(Error::SingularDesign)?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(min_pivot > 1e-13 * max_diag) {
        return Err(Error::SingularDesign);
    }
    Ok(chol)
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Maximise `g'd - d'Hd/2 - sum_j t_j |base_j + d_j|` by cyclic coordinate
/// descent. Coordinate 0 (the intercept) has `t_0 = 0`. After each full
/// sweep only the coordinates off zero are cycled, with a periodic
/// sign-fixed Newton step on that set.
pub(crate) fn coordinate_descent(h: &DMatrix<f64>, g: &[f64], base: &[f64], thresholds: &[f64], tol: f64, max_sweeps: usize) -> Vec<f64> {
    let q = g.len();
    let mut d = vec![0.0; q];
    let mut hd = vec![0.0; q];
    let all: Vec<usize> = (0..q).collect();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        if cd_sweep(h, g, base, thresholds, &all, &mut d, &mut hd) < tol {
            break;
        }
        let live: Vec<usize> = (0..q).filter(|&j| base[j] + d[j] != 0.0 || thresholds[j] == 0.0).collect();
        let mut since_newton = 0;
        while sweeps < max_sweeps {
            sweeps += 1;
            if since_newton >= 8 {
                since_newton = 0;
                if live_newton(h, g, base, thresholds, &live, &mut d, &mut hd) {
                    continue;
                }
            }
            since_newton += 1;
            if cd_sweep(h, g, base, thresholds, &live, &mut d, &mut hd) < tol {
                break;
            }
        }
    }
    // exact zeros for coordinates that end on the threshold boundary
    for j in 1..q {
        if (base[j] + d[j]).abs() < 1e-300 {
            d[j] = -base[j];
        }
    }
    d
}

/// Sign-fixed Newton on the live set: solve for the optimum with the signs
/// of the current iterate held, walk towards it until the first coordinate
/// reaches zero, drop that coordinate and repeat. Returns `true` once the
/// full step is taken.
fn live_newton(h: &DMatrix<f64>, g: &[f64], base: &[f64], thresholds: &[f64], live: &[usize], d: &mut [f64], hd: &mut [f64]) -> bool {
    let mut live = live.to_vec();
    while !live.is_empty() {
        let n = live.len();
        let sub = DMatrix::from_fn(n, n, |a, b| h[(live[a], live[b])]);
        let Some(chol) = sub.cholesky() else { return false };
        // g_L - (H d)_L + H_LL d_L - t_L s_L
        let mut rhs = DVector::zeros(n);
        for (a, &j) in live.iter().enumerate() {
            let inner: f64 = live.iter().map(|&l| h[(j, l)] * d[l]).sum();
            let pen = if thresholds[j] == 0.0 { 0.0 } else { thresholds[j] * (base[j] + d[j]).signum() };
            rhs[a] = g[j] - hd[j] + inner - pen;
        }
        let x = chol.solve(&rhs);
        let mut alpha = 1.0;
        let mut blocking = None;
        for (a, &j) in live.iter().enumerate() {
            let (from, to) = (base[j] + d[j], base[j] + x[a]);
            if thresholds[j] != 0.0 && from * to <= 0.0 {
                let t = from / (from - to);
                if t < alpha {
                    alpha = t;
                    blocking = Some(a);
                }
            }
        }
        for (a, &j) in live.iter().enumerate() {
            let delta = alpha * (x[a] - d[j]);
            if delta != 0.0 {
                d[j] += delta;
                for (v, &hij) in hd.iter_mut().zip(h.column(j).as_slice()) {
                    *v += delta * hij;
                }
            }
        }
        match blocking {
            None => return true,
            Some(a) => {
                let j = live.remove(a);
                let delta = -base[j] - d[j];
                d[j] = -base[j];
                for (v, &hij) in hd.iter_mut().zip(h.column(j).as_slice()) {
                    *v += delta * hij;
                }
            }
        }
    }
    false
}

/// One pass over `coords`; returns the largest change in `H`-norm units.
fn cd_sweep(h: &DMatrix<f64>, g: &[f64], base: &[f64], thresholds: &[f64], coords: &[usize], d: &mut [f64], hd: &mut [f64]) -> f64 {
    let mut max_change = 0.0f64;
    for &j in coords {
        let hjj = h[(j, j)];
        if hjj <= 0.0 {
            continue;
        }
        let a = g[j] - hd[j] + hjj * d[j];
        let u = if thresholds[j] == 0.0 {
            base[j] + a / hjj
        } else if thresholds[j].is_infinite() {
            0.0
        } else {
            soft_threshold(hjj * base[j] + a, thresholds[j]) / hjj
        };
        let delta = (u - base[j]) - d[j];
        if delta != 0.0 {
            d[j] += delta;
            for (v, &hij) in hd.iter_mut().zip(h.column(j).as_slice()) {
                *v += delta * hij;
            }
            max_change = max_change.max(delta.abs() * hjj.sqrt());
        }
    }
    max_change
}
