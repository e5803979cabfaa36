//! Simulation scenarios: true kernels and a synthetic covariate image.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Raster, Seed, Window};
use crate::error::Result;
use crate::spectral::{spiral_order, Frequency, FrequencyOrder, Spectrum};

/// Resolution of the synthetic covariate raster.
pub const COVARIATE_GRID: (usize, usize) = (256, 192);
/// Seed of the synthetic covariate (fixed so every run sees the same image).
pub const COVARIATE_SEED: u64 = 20_240_601;
/// Number of leading spiral frequencies carrying the true kernel.
pub const TRUE_SUPPORT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `beta_k = 0.3` on the first twelve spiral frequencies.
    A,
    /// `beta_k = 0.3 + 0.15 i k_y` on the first twelve spiral frequencies.
    B,
    /// Intercept only.
    Null,
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "null" | "noise" => Ok(Scenario::Null),
            other => Err(format!("unknown scenario `{other}` (expected a, b or null)")),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::Null => "null",
        })
    }
}

impl Scenario {
    /// True kernel spectrum with `beta_0 = intercept`.
    pub fn beta(self, intercept: f64) -> Spectrum {
        let mut beta = Spectrum::new(intercept);
        if self == Scenario::Null {
            return beta;
        }
        for &k in spiral_order(TRUE_SUPPORT).iter() {
            let v = match self {
                Scenario::A => Complex64::new(0.3, 0.0),
                Scenario::B => Complex64::new(0.3, 0.15 * k.ky as f64),
                Scenario::Null => unreachable!(),
            };
            beta.set(k, v);
        }
        beta
    }

    pub fn support_order(self) -> FrequencyOrder {
        match self {
            Scenario::Null => FrequencyOrder::new(Vec::new()).expect("empty order is valid"),
            _ => spiral_order(TRUE_SUPPORT),
        }
    }
}

/// Target amplitude `|Z_k|` (mean-normalised) of the synthetic covariate at
/// max-norm ring `t`.
fn ring_amplitude(t: u32) -> f64 {
    match t {
        0 => 0.0,
        1 | 2 => 0.3,
        3..=7 => 0.2 * 0.8f64.powi(t as i32 - 3),
        _ => 0.03 * 0.7f64.powi(t as i32 - 8),
    }
}

/// Highest ring carrying energy in the synthetic covariate.
const COVARIATE_MAX_RING: u32 = 10;

/// Spectrum of the synthetic covariate: unit mean, ring-dependent amplitudes
/// and phases drawn from `seed`.
pub fn synthetic_covariate_spectrum(seed: Seed) -> Spectrum {
    let mut rng = seed.rng();
    let t = COVARIATE_MAX_RING as usize;
    let order = spiral_order(2 * t * (t + 1));
    let mut spectrum = Spectrum::new(1.0);
    for &k in order.iter() {
        let phase = rng.random_range(0.0..2.0 * PI);
        // a little amplitude jitter so no two frequencies are exactly alike
        let jitter = rng.random_range(0.85..1.15);
        spectrum.set(k, Complex64::from_polar(ring_amplitude(k.ring()) * jitter, phase));
    }
    spectrum
}

/// Synthetic saliency-like covariate evaluated at pixel centers.
pub fn synthetic_covariate(nx: usize, ny: usize, window: Window, seed: Seed) -> Result<Raster> {
    let spectrum = synthetic_covariate_spectrum(seed);
    Raster::from_fn(nx, ny, window, |x, y| {
        let mut z = spectrum.zero();
        for (k, c) in spectrum.iter() {
            let theta = 2.0 * PI * (k.kx as f64 * x / window.width() + k.ky as f64 * y / window.height());
            z += 2.0 * (c * Complex64::from_polar(1.0, theta)).re;
        }
        z
    })
}

/// The covariate used by the study: [`synthetic_covariate`] on the default
/// window at [`COVARIATE_GRID`].
pub fn study_covariate() -> Raster {
    synthetic_covariate(COVARIATE_GRID.0, COVARIATE_GRID.1, Window::STUDY, Seed(COVARIATE_SEED))
        .expect("synthetic covariate is finite")
}

/// Indices in the `2K` coefficient layout over `order` that are nonzero in
/// `beta` (real parts first, then imaginary parts).
pub fn coefficient_support(beta: &Spectrum, order: &FrequencyOrder) -> Vec<usize> {
    let k = order.len();
    let mut out = Vec::new();
    for (i, &f) in order.iter().enumerate() {
        if beta.get(f).re != 0.0 {
            out.push(i);
        }
    }
    for (i, &f) in order.iter().enumerate() {
        if beta.get(f).im != 0.0 {
            out.push(k + i);
        }
    }
    out
}

/// `true` when `k` lies in the twelve-frequency true support.
pub fn in_true_support(k: Frequency) -> bool {
    spiral_order(TRUE_SUPPORT).position(k).is_some()
}
