use convintensity::evaluate::{auc, imse, tpr_fpr};
use convintensity::scenario::Scenario;
use convintensity::{ifft2, spiral_order, IntensityMap, PointPattern, Raster, Spectrum, Window};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn surface(beta: &Spectrum, n: usize, w: Window) -> Raster {
    let mut b = beta.clone();
    b.set_zero(0.0);
    ifft2(&b, n, n, w).unwrap()
}

#[test]
fn imse_equals_mean_squared_surface_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = Window::STUDY;
    let order = spiral_order(112);
    let truth = Scenario::A.beta(-8.0);
    let estimates: Vec<Spectrum> = (0..5)
        .map(|_| {
            let mut e = Spectrum::new(-8.0 + rng.random_range(-0.1..0.1));
            for &k in order.iter() {
                let t = truth.get(k);
                e.set(k, t + Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)));
            }
            e
        })
        .collect();
    let spectral = imse(&estimates, &truth, &order).unwrap();
    let n = 64;
    let ts = surface(&truth, n, w);
    let grid: f64 = estimates
        .iter()
        .map(|e| {
            let es = surface(e, n, w);
            es.values().iter().zip(ts.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (n * n) as f64
        })
        .sum::<f64>()
        / estimates.len() as f64;
    assert!((spectral / grid - 1.0).abs() < 0.02, "{spectral} vs {grid}");
}

#[test]
fn single_offset_contributes_its_pair() {
    let order = spiral_order(12);
    let truth = Scenario::A.beta(0.0);
    let mut e = truth.clone();
    let k = order.get(3);
    e.set(k, truth.get(k) + Complex64::new(0.1, 0.0));
    assert!((imse(&[e], &truth, &order).unwrap() - 0.02).abs() < 1e-15);
}

#[test]
fn rate_edge_cases() {
    let truth = [0, 3, 5];
    assert_eq!(tpr_fpr(&truth, &truth, 10), (Some(1.0), Some(0.0)));
    let all: Vec<usize> = (0..10).collect();
    assert_eq!(tpr_fpr(&all, &truth, 10), (Some(1.0), Some(1.0)));
    assert_eq!(tpr_fpr(&[], &truth, 10), (Some(0.0), Some(0.0)));
}

fn random_map(rng: &mut ChaCha8Rng, nx: usize, ny: usize, w: Window) -> IntensityMap {
    IntensityMap::new(Raster::new(nx, ny, w, (0..nx * ny).map(|_| rng.random_range(0.1..5.0)).collect()).unwrap()).unwrap()
}

fn random_pattern(rng: &mut ChaCha8Rng, n: usize, w: Window) -> PointPattern {
    PointPattern::new((0..n).map(|_| (rng.random::<f64>() * w.width(), rng.random::<f64>() * w.height())).collect(), w).unwrap()
}

#[test]
fn points_in_the_top_decile_give_high_auc() {
    let w = Window::STUDY;
    let (nx, ny) = (20, 10);
    // the left 2 of 20 columns carry the highest values
    let map = IntensityMap::new(Raster::from_fn(nx, ny, w, |x, _| if x < 2.0 * w.width() / nx as f64 { 10.0 } else { 1.0 }).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts = (0..200).map(|_| (rng.random::<f64>() * 0.1 * w.width(), rng.random::<f64>() * w.height())).collect();
    let a = auc(&map, &PointPattern::new(pts, w).unwrap()).unwrap();
    assert!(a >= 0.95, "{a}");
}

#[test]
fn auc_rejects_window_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let map = random_map(&mut rng, 8, 8, Window::STUDY);
    let pattern = random_pattern(&mut rng, 10, Window::unit());
    assert!(auc(&map, &pattern).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn auc_is_invariant_under_monotone_transforms(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Window::new(4.0, 3.0).unwrap();
        let map = random_map(&mut rng, 12, 9, w);
        let pattern = random_pattern(&mut rng, n, w);
        let base = auc(&map, &pattern).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let scaled = map.scaled(3.7).unwrap();
        let logged = IntensityMap::new(map.raster().map(|v| v.ln() + 10.0).unwrap()).unwrap();
        prop_assert!((auc(&scaled, &pattern).unwrap() - base).abs() < 1e-12);
        prop_assert!((auc(&logged, &pattern).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn constant_map_auc_is_one_half(seed in any::<u64>(), n in 1usize..60, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Window::new(2.0, 5.0).unwrap();
        let map = IntensityMap::new(Raster::constant(7, 5, w, c).unwrap()).unwrap();
        prop_assert_eq!(auc(&map, &random_pattern(&mut rng, n, w)).unwrap(), 0.5);
    }
}
