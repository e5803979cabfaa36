//! Point pattern simulation from an intensity map.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{IntensityMap, PointPattern, Raster, Seed, Window};
use crate::error::{Error, Result};

/// Number of pilot runs used to estimate the Thomas correction factor.
pub const THOMAS_PILOT_RUNS: usize = 50;
/// Pilot seed used by [`simulate_thomas`].
pub const THOMAS_PILOT_SEED: u64 = 0x7070_a5a5;

/// Intercept `c` such that `exp(grid + c)` has expected count `target`.
pub fn calibrate_intercept(log_intensity: &Raster, target: f64) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidArgument(format!("target count must be positive, got {target}")));
    }
    // factor out the maximum so exp never overflows
    let top = log_intensity.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass: f64 = log_intensity.values().iter().map(|v| (v - top).exp()).sum::<f64>() * log_intensity.pixel_area();
    Ok((target / mass).ln() - top)
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Inhomogeneous Poisson pattern by Lewis-Shedler thinning of a homogeneous
/// pattern at the map maximum. The map is read by bilinear interpolation.
pub fn simulate_poisson(map: &IntensityMap, seed: Seed) -> PointPattern {
    let mut rng = seed.rng();
    poisson_with(map, &mut rng)
}

fn poisson_with(map: &IntensityMap, rng: &mut ChaCha8Rng) -> PointPattern {
    let window = map.window();
    let raster = map.raster();
    let top = map.max();
    let n = poisson_count(rng, top * window.area());
    let mut points = Vec::with_capacity((map.expected_count() * 1.2) as usize + 8);
    for _ in 0..n {
        let x = rng.random::<f64>() * window.width();
        let y = rng.random::<f64>() * window.height();
        let u: f64 = rng.random();
        if u * top < raster.bilinear(x, y) {
            points.push((x, y));
        }
    }
    PointPattern::new(points, window).expect("candidates lie in the window")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThomasConfig {
    pub mean_clusters: f64,
    pub offspring_sd: f64,
    pub target_count: f64,
}

impl ThomasConfig {
    pub fn new(target_count: f64) -> Self {
        Self { mean_clusters: 100.0, offspring_sd: 30.0, target_count }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.mean_clusters) {
            return Err(Error::InvalidArgument(format!("mean_clusters must be positive, got {}", self.mean_clusters)));
        }
        if !ok(self.offspring_sd) {
            return Err(Error::InvalidArgument(format!("offspring_sd must be positive, got {}", self.offspring_sd)));
        }
        if !ok(self.target_count) {
            return Err(Error::InvalidArgument(format!("target_count must be positive, got {}", self.target_count)));
        }
        Ok(())
    }
}

/// Inhomogeneous Thomas process realised as a thinned stationary Thomas
/// process. Parents have intensity `mean_clusters / |W|` on the window grown
/// by `4 sd`; every parent has `Poisson(target / mean_clusters * correction)`
/// offspring displaced by `N(0, sd^2 I)`, then thinned by `rho / rho_max`.
#[derive(Debug, Clone)]
pub struct ThomasSimulator {
    map: IntensityMap,
    cfg: ThomasConfig,
    correction: f64,
}

impl ThomasSimulator {
    /// Estimates the correction factor from [`THOMAS_PILOT_RUNS`] pilot runs.
    pub fn new(map: IntensityMap, cfg: ThomasConfig, pilot_seed: Seed) -> Result<Self> {
        cfg.validate()?;
        let integral = map.expected_count();
        // exact in expectation away from edges; the pilot absorbs the rest
        let initial = map.max() * map.window().area() / integral;
        let mut sim = Self { map, cfg, correction: initial };
        let mut total = 0usize;
        for r in 0..THOMAS_PILOT_RUNS {
            total += sim.simulate(pilot_seed.replicate(r)).len();
        }
        let mean = total as f64 / THOMAS_PILOT_RUNS as f64;
        if mean > 0.0 {
            sim.correction *= cfg.target_count / mean;
        }
        Ok(sim)
    }

    /// Simulator with an explicit correction factor (no pilot).
    pub fn with_correction(map: IntensityMap, cfg: ThomasConfig, correction: f64) -> Result<Self> {
        cfg.validate()?;
        if !(correction > 0.0 && correction.is_finite()) {
            return Err(Error::InvalidArgument(format!("correction must be positive, got {correction}")));
        }
        Ok(Self { map, cfg, correction })
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }

    pub fn config(&self) -> &ThomasConfig {
        &self.cfg
    }

    pub fn simulate(&self, seed: Seed) -> PointPattern {
        let mut rng = seed.rng();
        let window = self.map.window();
        let raster = self.map.raster();
        let top = self.map.max();
        let sd = self.cfg.offspring_sd;
        let pad = 4.0 * sd;
        let grown_w = window.width() + 2.0 * pad;
        let grown_h = window.height() + 2.0 * pad;
        let parent_mean = self.cfg.mean_clusters / window.area() * grown_w * grown_h;
        let offspring_mean = self.cfg.target_count / self.cfg.mean_clusters * self.correction;
        let normal = Normal::new(0.0, sd).expect("positive sd");

        let n_parents = poisson_count(&mut rng, parent_mean);
        let mut points = Vec::new();
        for _ in 0..n_parents {
            let px = rng.random::<f64>() * grown_w - pad;
            let py = rng.random::<f64>() * grown_h - pad;
            let n_off = poisson_count(&mut rng, offspring_mean);
            for _ in 0..n_off {
                let x = px + normal.sample(&mut rng);
                let y = py + normal.sample(&mut rng);
                let u: f64 = rng.random();
                if window.contains(x, y) && u * top < raster.bilinear(x, y) {
                    points.push((x, y));
                }
            }
        }
        PointPattern::new(points, window).expect("retained points lie in the window")
    }
}

/// One Thomas realisation. The correction factor comes from a pilot seeded
/// with [`THOMAS_PILOT_SEED`], so it depends on the map and config only.
pub fn simulate_thomas(map: &IntensityMap, cfg: ThomasConfig, seed: Seed) -> Result<PointPattern> {
    Ok(ThomasSimulator::new(map.clone(), cfg, Seed(THOMAS_PILOT_SEED))?.simulate(seed))
}

/// Homogeneous map with intensity `target / |W|` on an `nx x ny` grid.
pub fn homogeneous_map(window: Window, nx: usize, ny: usize, target: f64) -> Result<IntensityMap> {
    IntensityMap::new(Raster::constant(nx, ny, window, target / window.area())?)
}
