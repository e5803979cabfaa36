use convintensity::scenario::{study_covariate, Scenario};
use convintensity::simulate::{calibrate_intercept, homogeneous_map, simulate_poisson, simulate_thomas, ThomasConfig, ThomasSimulator};
use convintensity::{fft2, log_intensity, normalize_covariate, predict_intensity, IntensityMap, Seed, Window};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const RUNS: usize = 500;

fn scenario_map(target: f64) -> IntensityMap {
    let z = study_covariate();
    let spectrum = normalize_covariate(&fft2(&z)).unwrap();
    let mut beta = Scenario::A.beta(0.0);
    let lr = log_intensity(&beta, &spectrum, z.nx(), z.ny(), z.window()).unwrap();
    beta.set_zero(calibrate_intercept(&lr, target).unwrap());
    predict_intensity(&beta, &spectrum, z.nx(), z.ny(), z.window()).unwrap().map
}

fn counts(f: impl Fn(Seed) -> usize) -> Vec<f64> {
    (0..RUNS).map(|m| f(Seed(1000).replicate(m)) as f64).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn homogeneous_counts_have_poisson_mean_and_variance() {
    let map = homogeneous_map(Window::STUDY, 32, 24, 200.0).unwrap();
    let (mean, var) = mean_var(&counts(|s| simulate_poisson(&map, s).len()));
    assert!((mean - 200.0).abs() < 3.0 * (200.0f64 / RUNS as f64).sqrt(), "mean {mean}");
    assert!((var / mean - 1.0).abs() < 0.2, "dispersion {}", var / mean);

    let doubled = homogeneous_map(Window::STUDY, 32, 24, 400.0).unwrap();
    let (mean2, _) = mean_var(&counts(|s| simulate_poisson(&doubled, s).len()));
    assert!((mean2 / mean - 2.0).abs() < 0.05, "{mean2} vs {mean}");
}

#[test]
fn calibrated_scenario_map_hits_its_count() {
    let map = scenario_map(200.0);
    assert!((map.expected_count() - 200.0).abs() < 1.0);
    let (mean, _) = mean_var(&counts(|s| simulate_poisson(&map, s).len()));
    assert!((mean - 200.0).abs() < 3.0 * (200.0f64 / RUNS as f64).sqrt(), "mean {mean}");
}

/// Pooled counts on an 8 x 6 aggregation against the integral of the
/// (bilinearly read) intensity over each cell.
#[test]
fn cell_counts_pass_chi_square() {
    let map = scenario_map(200.0);
    let (cx, cy) = (8usize, 6usize);
    let w = map.window();
    let raster = map.raster();
    let sub = 8;
    let (fx, fy) = (raster.nx() * sub, raster.ny() * sub);
    let (dx, dy) = (w.width() / fx as f64, w.height() / fy as f64);
    let mut expected = vec![0.0; cx * cy];
    for j in 0..fy {
        for i in 0..fx {
            let (x, y) = ((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
            let cell = (j * cy / fy) * cx + i * cx / fx;
            expected[cell] += raster.bilinear(x, y) * dx * dy * RUNS as f64;
        }
    }
    let mut observed = vec![0.0; cx * cy];
    for m in 0..RUNS {
        for &(x, y) in simulate_poisson(&map, Seed(7).replicate(m)).points() {
            let i = ((x / w.width() * cx as f64) as usize).min(cx - 1);
            let j = ((y / w.height() * cy as f64) as usize).min(cy - 1);
            observed[j * cx + i] += 1.0;
        }
    }
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((cx * cy) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat:.1}, p = {p:.4}");
}

/// Kolmogorov-Smirnov test of the x coordinates of a homogeneous pattern.
#[test]
fn homogeneous_coordinates_are_uniform() {
    let map = homogeneous_map(Window::STUDY, 16, 12, 5000.0).unwrap();
    let pattern = simulate_poisson(&map, Seed(3));
    let mut xs: Vec<f64> = pattern.points().iter().map(|p| p.0 / Window::STUDY.width()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn thomas_counts_are_overdispersed_with_the_right_mean() {
    let map = scenario_map(400.0);
    let sim = ThomasSimulator::new(map, ThomasConfig::new(400.0), Seed(5)).unwrap();
    let (mean, var) = mean_var(&counts(|s| sim.simulate(s).len()));
    assert!((mean / 400.0 - 1.0).abs() < 0.05, "mean {mean}");
    assert!(var / mean > 1.2, "dispersion {}", var / mean);
}

#[test]
fn diffuse_thomas_matches_poisson_first_moment() {
    let map = scenario_map(300.0);
    let cfg = ThomasConfig { offspring_sd: 2000.0, ..ThomasConfig::new(300.0) };
    let sim = ThomasSimulator::new(map.clone(), cfg, Seed(8)).unwrap();
    let left = |pts: &[(f64, f64)]| pts.iter().filter(|p| p.0 < 512.0).count();
    let thomas: Vec<(usize, usize)> = (0..RUNS).map(|m| sim.simulate(Seed(20).replicate(m))).map(|p| (p.len(), left(p.points()))).collect();
    let poisson: Vec<(usize, usize)> = (0..RUNS).map(|m| simulate_poisson(&map, Seed(20).replicate(m))).map(|p| (p.len(), left(p.points()))).collect();
    let total = |v: &[(usize, usize)], f: fn(&(usize, usize)) -> usize| v.iter().map(f).sum::<usize>() as f64;
    let (nt, np) = (total(&thomas, |c| c.0), total(&poisson, |c| c.0));
    assert!((nt / np - 1.0).abs() < 0.05, "{nt} vs {np}");
    let (lt, lp) = (total(&thomas, |c| c.1) / nt, total(&poisson, |c| c.1) / np);
    assert!((lt - lp).abs() < 0.02, "left-half share {lt} vs {lp}");
}

#[test]
fn simulations_are_bit_reproducible() {
    let map = scenario_map(200.0);
    assert_eq!(simulate_poisson(&map, Seed(9)), simulate_poisson(&map, Seed(9)));
    assert_ne!(simulate_poisson(&map, Seed(9)), simulate_poisson(&map, Seed(10)));
    let cfg = ThomasConfig::new(200.0);
    assert_eq!(simulate_thomas(&map, cfg, Seed(4)).unwrap(), simulate_thomas(&map, cfg, Seed(4)).unwrap());
}
