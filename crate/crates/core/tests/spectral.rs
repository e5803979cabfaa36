use std::f64::consts::PI;

use convintensity::scenario::Scenario;
use convintensity::spectral::{design_row, Frequency};
use convintensity::{fft2, ifft2, log_intensity, spiral_order, Raster, Spectrum, Window};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `zero + sum 2 Re[c_k phi_k(x, y)]`.
fn synthesize(s: &Spectrum, x: f64, y: f64, w: Window) -> f64 {
    s.iter().fold(s.zero(), |acc, (k, c)| {
        let t = 2.0 * PI * (k.kx as f64 * x / w.width() + k.ky as f64 * y / w.height());
        acc + 2.0 * (c * Complex64::from_polar(1.0, t)).re
    })
}

fn random_grid(rng: &mut ChaCha8Rng, nx: usize, ny: usize, w: Window) -> Raster {
    Raster::new(nx, ny, w, (0..nx * ny).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// Random spectrum on the canonical frequencies below the Nyquist limit of
/// an `nx x ny` grid.
fn random_spectrum(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> Spectrum {
    let (hx, hy) = (((nx - 1) / 2) as i32, ((ny - 1) / 2) as i32);
    let mut s = Spectrum::new(rng.random_range(-1.0..1.0));
    for ky in 0..=hy {
        for kx in -hx..=hx {
            let k = Frequency::new(kx, ky);
            if k.is_canonical() {
                s.set(k, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
    }
    s
}

#[test]
fn fft2_matches_direct_dft_on_odd_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = Window::new(5.0, 3.0).unwrap();
    let (nx, ny) = (15, 9);
    let grid = random_grid(&mut rng, nx, ny, w);
    let spec = fft2(&grid);
    assert_eq!(spec.len(), (nx * ny - 1) / 2);
    for (k, c) in spec.iter() {
        let mut direct = Complex64::default();
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = grid.pixel_center(i, j);
                let t = 2.0 * PI * (k.kx as f64 * x / w.width() + k.ky as f64 * y / w.height());
                direct += grid.get(i, j) * Complex64::from_polar(1.0, -t);
            }
        }
        direct /= (nx * ny) as f64;
        assert!((c - direct).norm() < 1e-12, "{k}: {c} vs {direct}");
    }
}

#[test]
fn round_trip_on_32_by_32() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = random_grid(&mut rng, 32, 32, Window::STUDY);
    let back = ifft2(&fft2(&grid), 32, 32, Window::STUDY).unwrap();
    let err = back.values().iter().zip(grid.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn spiral_prefixes_cover_whole_rings() {
    for (k, ring) in [(12, 2), (24, 3), (40, 4), (112, 7)] {
        let order = spiral_order(k);
        assert!(order.iter().all(|f| f.is_canonical() && f.ring() <= ring));
        let count = (-(ring as i32)..=ring as i32)
            .flat_map(|ky| (-(ring as i32)..=ring as i32).map(move |kx| Frequency::new(kx, ky)))
            .filter(|f| f.is_canonical())
            .count();
        assert_eq!(count, k);
    }
    assert_eq!(spiral_order(1).as_slice(), &[Frequency::new(1, 0)]);
}

#[test]
fn scenario_a_surface_is_even_about_the_center() {
    let w = Window::STUDY;
    let mut beta = Scenario::A.beta(0.0);
    beta.set_zero(0.0);
    let (nx, ny) = (64, 48);
    let r = ifft2(&beta, nx, ny, w).unwrap();
    // s -> -s on the torus maps pixel i to nx - 1 - i
    for j in 0..ny {
        for i in 0..nx {
            assert!((r.get(i, j) - r.get(nx - 1 - i, ny - 1 - j)).abs() < 1e-12);
        }
    }
    let v = r.values();
    assert!(v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 0.5);
}

#[test]
fn design_row_reproduces_product_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = Window::new(2.0, 1.0).unwrap();
    let order = spiral_order(24);
    let z = random_spectrum(&mut rng, 16, 16);
    let mut beta = Spectrum::new(0.3);
    for &k in order.iter() {
        beta.set(k, Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
    }
    let conv = log_intensity(&beta, &z, 16, 16, w).unwrap();
    let k = order.len();
    for j in 0..16 {
        for i in 0..16 {
            let s = conv.pixel_center(i, j);
            let row = design_row(&z, &order, s, w);
            let mut v = beta.zero() * z.zero();
            for (n, &f) in order.iter().enumerate() {
                v += row[n] * beta.get(f).re + row[k + n] * beta.get(f).im;
            }
            assert!((conv.get(i, j) - v).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_any_size(nx in 2usize..24, ny in 2usize..24, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Window::new(1.0 + (seed % 7) as f64, 2.5).unwrap();
        let grid = random_grid(&mut rng, nx, ny, w);
        let back = ifft2(&fft2(&grid), nx, ny, w).unwrap();
        for (a, b) in back.values().iter().zip(grid.values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ifft2_matches_direct_synthesis(nx in 3usize..20, ny in 3usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Window::new(4.0, 3.0).unwrap();
        let s = random_spectrum(&mut rng, nx, ny);
        let r = ifft2(&s, nx, ny, w).unwrap();
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = r.pixel_center(i, j);
                prop_assert!((r.get(i, j) - synthesize(&s, x, y, w)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn product_spectrum_is_circular_convolution(nx in 4usize..14, ny in 4usize..14, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Window::new(3.0, 2.0).unwrap();
        let (a, b) = (random_spectrum(&mut rng, nx, ny), random_spectrum(&mut rng, nx, ny));
        let ga = ifft2(&a, nx, ny, w).unwrap();
        let gb = ifft2(&b, nx, ny, w).unwrap();
        let conv = ifft2(&a.product(&b), nx, ny, w).unwrap();
        // a is evaluated at pixel differences, which are whole pixel offsets
        let (dx, dy) = (w.width() / nx as f64, w.height() / ny as f64);
        let shifts: Vec<f64> = (0..nx * ny).map(|o| synthesize(&a, (o % nx) as f64 * dx, (o / nx) as f64 * dy, w)).collect();
        prop_assert!(ga.values().iter().all(|v| v.is_finite()));
        for j in 0..ny {
            for i in 0..nx {
                let mut direct = 0.0;
                for q in 0..ny {
                    for p in 0..nx {
                        direct += shifts[((j + ny - q) % ny) * nx + (i + nx - p) % nx] * gb.get(p, q);
                    }
                }
                direct /= (nx * ny) as f64;
                prop_assert!((conv.get(i, j) - direct).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn parseval_on_odd_grids(hx in 1usize..9, hy in 1usize..9, seed in any::<u64>()) {
        let (nx, ny) = (2 * hx + 1, 2 * hy + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, nx, ny, Window::STUDY);
        let s = fft2(&grid);
        let energy = s.zero().powi(2) + 2.0 * s.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>();
        let mean_sq = grid.values().iter().map(|v| v * v).sum::<f64>() / (nx * ny) as f64;
        prop_assert!((energy - mean_sq).abs() < 1e-10 * mean_sq.max(1.0));
    }
}
