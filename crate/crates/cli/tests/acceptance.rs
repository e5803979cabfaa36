//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. Thresholds are pinned below.
//!
//! Criteria 4 to 7 run the desk-scale study (M = 100 replicates per level)
//! and take several minutes on a single core.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use convintensity::quadrature::QuadratureScheme;
use convintensity::scenario::Scenario;
use convintensity::simulate::simulate_poisson;
use convintensity::solver::{kkt_residual, lambda_max};
use convintensity::spectral::Frequency;
use convintensity::{
    build_scheme, fft2, fit_adaptive, fit_mle, fit_penalized, ifft2, log_intensity, spiral_order, Penalty, PenaltyKind, PointPattern,
    Raster, SchemeOptions, Seed, SolverConfig, Spectrum, Window,
};
use convintensity_cli::common::{Covariate, Kernel, Process};
use convintensity_cli::study::{run_study, StudyConfig, StudyOutcome};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// criterion 1
const DFT_TOL: f64 = 1e-10;
const CONVOLUTION_TOL: f64 = 1e-8;
// criterion 2
const GRADIENT_REL_TOL: f64 = 1e-5;
const FD_POINTS: usize = 20;
const INTERCEPT_TOL: f64 = 1e-8;
// criterion 3
const KKT_TOL: f64 = 1e-6;
const MLE_MATCH_TOL: f64 = 1e-5;
// criteria 4 to 7
const M: usize = 100;
const LEVELS: [f64; 3] = [200.0, 800.0, 1800.0];
const K: usize = 112;
const TPR_MIN_POISSON: f64 = 0.9;
const FPR_MAX_POISSON: f64 = 0.2;
const SHRINK_200_800: (f64, f64) = (1.6, 3.8);
const SHRINK_800_1800: (f64, f64) = (1.1, 2.2);
const TPR_MIN_THOMAS: f64 = 0.8;
const AUC_FLOOR: f64 = 0.5;

struct Ledger {
    failures: Vec<usize>,
}

impl Ledger {
    /// Written straight to stderr so the lines show up without `--nocapture`.
    fn record(&mut self, criterion: usize, pass: bool, detail: String) {
        let line = format!("acceptance criterion {criterion}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
        let _ = std::io::stderr().write_all(line.as_bytes());
        if !pass {
            self.failures.push(criterion);
        }
    }
}

/// `zero + sum_k 2 Re[c_k exp(2 pi i (kx x / w + ky y / h))]`.
fn synthesize(s: &Spectrum, x: f64, y: f64, w: Window) -> f64 {
    let mut v = s.zero();
    for (k, c) in s.iter() {
        let t = 2.0 * PI * (k.kx as f64 * x / w.width() + k.ky as f64 * y / w.height());
        v += 2.0 * (c * Complex64::from_polar(1.0, t)).re;
    }
    v
}

fn random_spectrum(rng: &mut ChaCha8Rng, max_ring: usize) -> Spectrum {
    let mut s = Spectrum::new(rng.random_range(-1.0..1.0));
    let t = max_ring;
    for &k in spiral_order(2 * t * (t + 1)).iter() {
        s.set(k, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    }
    s
}

fn criterion_1(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, w) = (16usize, Window::new(3.0, 2.0).unwrap());
    let half = n as i32 / 2;
    let mut dft_err = 0.0f64;
    let mut inv_err = 0.0f64;
    let mut count_ok = true;
    for _ in 0..5 {
        let values: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grid = Raster::new(n, n, w, values).unwrap();
        let spec = fft2(&grid);
        let mut expected_len = 0;
        for ky in 1 - half..=half {
            for kx in 1 - half..=half {
                let k = Frequency::new(kx, ky);
                if !k.is_canonical() {
                    continue;
                }
                expected_len += 1;
                let mut direct = Complex64::default();
                for j in 0..n {
                    for i in 0..n {
                        let (x, y) = grid.pixel_center(i, j);
                        let t = 2.0 * PI * (kx as f64 * x / w.width() + ky as f64 * y / w.height());
                        direct += grid.get(i, j) * Complex64::from_polar(1.0, -t);
                    }
                }
                direct /= (n * n) as f64;
                dft_err = dft_err.max((spec.get(k) - halved(k, n, direct)).norm());
            }
        }
        count_ok &= spec.len() == expected_len && (spec.zero() - grid.mean()).abs() < DFT_TOL;
        let back = ifft2(&spec, n, n, w).unwrap();
        for (a, b) in back.values().iter().zip(grid.values()) {
            inv_err = inv_err.max((a - b).abs());
        }
        // ifft2 against direct synthesis of a band-limited spectrum
        let s = random_spectrum(&mut rng, 5);
        let r = ifft2(&s, n, n, w).unwrap();
        for j in 0..n {
            for i in 0..n {
                let (x, y) = r.pixel_center(i, j);
                inv_err = inv_err.max((r.get(i, j) - synthesize(&s, x, y, w)).abs());
            }
        }
    }

    // (beta * Z)(s_p) = (1/N) sum_q beta(s_p - s_q) Z(s_q), circular on the grid
    let beta = random_spectrum(&mut rng, 3);
    let z = random_spectrum(&mut rng, 4);
    let conv = log_intensity(&beta, &z, n, n, w).unwrap();
    let (dx, dy) = (w.width() / n as f64, w.height() / n as f64);
    let offsets: Vec<f64> = (0..n * n).map(|o| synthesize(&beta, (o % n) as f64 * dx, (o / n) as f64 * dy, w)).collect();
    let z_grid: Vec<f64> = (0..n * n)
        .map(|o| {
            let (x, y) = conv.pixel_center(o % n, o / n);
            synthesize(&z, x, y, w)
        })
        .collect();
    let mut conv_err = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let mut direct = 0.0;
            for q in 0..n {
                for p in 0..n {
                    let o = ((j + n - q) % n) * n + (i + n - p) % n;
                    direct += offsets[o] * z_grid[q * n + p];
                }
            }
            direct /= (n * n) as f64;
            conv_err = conv_err.max((conv.get(i, j) - direct).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ledger.record(
        1,
        count_ok && dft_err < DFT_TOL && inv_err < DFT_TOL && conv_err < CONVOLUTION_TOL,
        format!("max |fft2 - DFT| {dft_err:.2e}, max ifft2 error {inv_err:.2e} (< {DFT_TOL:e}); convolution error {conv_err:.2e} (< {CONVOLUTION_TOL:e}); {secs:.2} s"),
    );
}

/// Nyquist frequencies whose alias partner is also canonical are stored
/// halved.
fn halved(k: Frequency, n: usize, v: Complex64) -> Complex64 {
    let wrap = |c: i32| {
        let b = (-c).rem_euclid(n as i32);
        if b as usize <= n / 2 {
            b
        } else {
            b - n as i32
        }
    };
    if Frequency::new(wrap(k.kx), wrap(k.ky)).is_canonical() {
        v * 0.5
    } else {
        v
    }
}

/// A scenario-(a) Poisson pattern at `target` and its quadrature scheme.
fn scheme_for(target: f64, k: usize, seed: u64) -> (PointPattern, QuadratureScheme) {
    let cov = Covariate::load(None).unwrap();
    let (_, map) = cov.calibrate(&Kernel::Scenario(Scenario::A).shape().unwrap(), target).unwrap();
    let pattern = simulate_poisson(&map, Seed(seed));
    let scheme = build_scheme(&pattern, &cov.spectrum, &spiral_order(k), SchemeOptions::default()).unwrap();
    (pattern, scheme)
}

fn criterion_2(ledger: &mut Ledger) {
    let start = Instant::now();
    let (pattern, scheme) = scheme_for(800.0, 12, 5);
    let p = scheme.n_columns();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = (scheme.n_data() as f64 / scheme.total_weight()).ln();
    let mut worst = 0.0f64;
    for _ in 0..FD_POINTS {
        let theta = base + rng.random_range(-0.5..0.5);
        let psi: Vec<f64> = (0..p).map(|_| rng.random_range(-0.3..0.3)).collect();
        let (g0, g) = scheme.gradient(theta, &psi);
        let h = 1e-5;
        let fd0 = (scheme.loglik(theta + h, &psi) - scheme.loglik(theta - h, &psi)) / (2.0 * h);
        let mut num = (fd0 - g0).powi(2);
        let mut den = g0 * g0;
        for j in 0..p {
            let mut up = psi.clone();
            let mut dn = psi.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (scheme.loglik(theta, &up) - scheme.loglik(theta, &dn)) / (2.0 * h);
            num += (fd - g[j]).powi(2);
            den += g[j] * g[j];
        }
        worst = worst.max((num / den).sqrt());
    }

    let empty = QuadratureScheme::with_columns(&pattern, 0, SchemeOptions::default(), |_, _, _| {}).unwrap();
    let fit = fit_mle(&empty, &SolverConfig::default()).unwrap();
    let expected = (empty.n_data() as f64 / empty.window().area()).ln();
    let intercept_err = (fit.coef.intercept - expected).abs();
    let secs = start.elapsed().as_secs_f64();
    ledger.record(
        2,
        worst < GRADIENT_REL_TOL && intercept_err < INTERCEPT_TOL,
        format!(
            "worst relative gradient error over {FD_POINTS} points {worst:.2e} (< {GRADIENT_REL_TOL:e}); intercept-only MLE error {intercept_err:.2e} (< {INTERCEPT_TOL:e}); {secs:.2} s"
        ),
    );
}

fn criterion_3(ledger: &mut Ledger) {
    let start = Instant::now();
    let (_, scheme) = scheme_for(800.0, 12, 8);
    let cfg = SolverConfig::default();
    let result = fit_adaptive(&scheme, PenaltyKind::Lasso, &cfg).unwrap();
    let mut worst_kkt = 0.0f64;
    for point in &result.path {
        let pen = Penalty::lasso(point.lambda, result.weights.clone());
        worst_kkt = worst_kkt.max(kkt_residual(&scheme, &pen, &point.coef).unwrap());
    }
    let all_ok = result.path.iter().all(|p| p.error.is_none());

    let unit = vec![1.0; scheme.n_columns()];
    let top = lambda_max(&scheme, &unit).unwrap();
    let at_max = fit_penalized(&scheme, &Penalty::lasso(top, unit.clone()), &cfg, None).unwrap();
    let above = fit_penalized(&scheme, &Penalty::lasso(2.0 * top, unit.clone()), &cfg, None).unwrap();
    let zeros = at_max.coef.support_size() == 0 && above.coef.support_size() == 0;

    let mle = fit_mle(&scheme, &cfg).unwrap();
    let free = fit_penalized(&scheme, &Penalty::lasso(0.0, unit), &cfg, None).unwrap();
    let mut mle_diff = (mle.coef.intercept - free.coef.intercept).abs();
    for (a, b) in mle.coef.unscaled().iter().zip(free.coef.unscaled()) {
        mle_diff = mle_diff.max((a - b).abs());
    }
    // the residual is reported per point; the unnormalised objective is n(W) times larger
    let raw_kkt = worst_kkt * scheme.n_data() as f64;
    let secs = start.elapsed().as_secs_f64();
    ledger.record(
        3,
        all_ok && raw_kkt <= KKT_TOL && zeros && mle_diff < MLE_MATCH_TOL,
        format!(
            "max KKT residual over {} path points {worst_kkt:.2e} per point, {raw_kkt:.2e} unnormalised (<= {KKT_TOL:e}); all-zero at lambda_max: {zeros}; |lasso(0) - MLE| {mle_diff:.2e} (< {MLE_MATCH_TOL:e}); {secs:.2} s",
            result.path.len()
        ),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn level_mean(outcome: &StudyOutcome, target: f64, f: impl Fn(&convintensity::evaluate::ReplicateReport) -> Option<f64>) -> f64 {
    outcome.reports.iter().find(|r| r.target_n == target).and_then(f).unwrap_or(f64::NAN)
}

fn poisson_criteria(ledger: &mut Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = StudyConfig::new(dir.path());
    cfg.target_n = LEVELS.to_vec();
    cfg.m = M;
    cfg.k = K;
    cfg.baseline = true;
    let start = Instant::now();
    let outcome = run_study(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let mse: Vec<f64> = LEVELS.iter().map(|&t| level_mean(&outcome, t, |r| Some(r.mse))).collect();
    let imse: Vec<f64> = LEVELS.iter().map(|&t| level_mean(&outcome, t, |r| Some(r.imse))).collect();
    let tpr: Vec<f64> = LEVELS.iter().map(|&t| level_mean(&outcome, t, |r| r.tpr)).collect();
    let fpr: Vec<f64> = LEVELS.iter().map(|&t| level_mean(&outcome, t, |r| r.fpr)).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let complete = outcome.failures() == 0 && outcome.reports.len() == LEVELS.len();
    let pass4 = complete
        && decreasing(&mse)
        && decreasing(&imse)
        && tpr[2] >= TPR_MIN_POISSON
        && fpr.iter().all(|f| *f <= FPR_MAX_POISSON);
    ledger.record(
        4,
        pass4,
        format!(
            "E[N] {LEVELS:?}: MSE {} | IMSE {} | TPR {} | FPR {} (need strictly decreasing MSE and IMSE, TPR at 1800 >= {TPR_MIN_POISSON}, FPR <= {FPR_MAX_POISSON}); failed fits {}; {secs:.0} s",
            fmt(&mse),
            fmt(&imse),
            fmt(&tpr),
            fmt(&fpr),
            outcome.failures()
        ),
    );

    let medians: Vec<f64> = LEVELS
        .iter()
        .map(|&t| median(outcome.level(t).filter(|r| !r.failed()).map(|r| r.psi_error).collect()))
        .collect();
    let s1 = medians[0] / medians[1];
    let s2 = medians[1] / medians[2];
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    ledger.record(
        5,
        inside(s1, SHRINK_200_800) && inside(s2, SHRINK_800_1800),
        format!(
            "median |psi_hat - psi_0| {}; shrink 200->800 {s1:.3} (in {SHRINK_200_800:?}), 800->1800 {s2:.3} (in {SHRINK_800_1800:?})",
            fmt(&medians)
        ),
    );

    let auc_of = |method: &str| {
        outcome.auc.iter().find(|a| a.target_n == 1800.0 && a.method == method).map_or(f64::NAN, |a| a.mean_auc)
    };
    let (lasso, base) = (auc_of("lasso"), auc_of("baseline"));
    ledger.record(
        7,
        lasso > base && base > AUC_FLOOR,
        format!("E[N] 1800: mean AUC lasso {lasso:.4} > baseline {base:.4} > {AUC_FLOOR}"),
    );
}

fn criterion_6(ledger: &mut Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = StudyConfig::new(dir.path());
    cfg.process = Process::Thomas;
    cfg.target_n = vec![1800.0];
    cfg.m = M;
    cfg.k = K;
    let start = Instant::now();
    let outcome = run_study(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let tpr = level_mean(&outcome, 1800.0, |r| r.tpr);
    let fpr = level_mean(&outcome, 1800.0, |r| r.fpr);
    let mean_n = outcome.replicates.iter().map(|r| r.n_points as f64).sum::<f64>() / outcome.replicates.len() as f64;
    ledger.record(
        6,
        outcome.failures() == 0 && tpr >= TPR_MIN_THOMAS,
        format!(
            "Thomas E[N] 1800 (mean count {mean_n:.0}): TPR {tpr:.3} (>= {TPR_MIN_THOMAS}); FPR {fpr:.4} (reported only; compare criterion 4); {secs:.0} s"
        ),
    );
}

fn criterion_8(ledger: &mut Ledger) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let build = |dir: &std::path::Path| {
        let mut cfg = StudyConfig::new(dir);
        cfg.target_n = vec![200.0, 800.0];
        cfg.m = 4;
        cfg.k = 24;
        cfg.seed = 42;
        cfg.baseline = true;
        cfg
    };
    run_study(&build(a.path())).unwrap();
    // the second run uses a different worker count
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| run_study(&build(b.path()))).unwrap();
    let files = ["report.csv", "replicates.csv", "auc.csv"];
    let same = files.iter().all(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap());
    ledger.record(8, same, format!("rerun with identical seed: {} byte-identical: {same}", files.join(", ")));
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

impl Ledger {
    fn new() -> Self {
        Self { failures: Vec::new() }
    }

    fn check(self) {
        assert!(self.failures.is_empty(), "failed acceptance criteria: {:?}", self.failures);
    }
}

fn run(f: impl FnOnce(&mut Ledger)) {
    let mut ledger = Ledger::new();
    f(&mut ledger);
    ledger.check();
}

#[test]
fn criterion_1_spectral_oracle() {
    run(criterion_1);
}

#[test]
fn criterion_2_likelihood() {
    run(criterion_2);
}

#[test]
fn criterion_3_solver_kkt() {
    run(criterion_3);
}

#[test]
fn criteria_4_5_7_poisson_study() {
    run(poisson_criteria);
}

#[test]
fn criterion_6_thomas_stress() {
    run(criterion_6);
}

#[test]
fn criterion_8_determinism() {
    run(criterion_8);
}
