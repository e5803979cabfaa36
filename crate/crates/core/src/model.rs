//! Kernel spectra, log-intensity surfaces and intensity predictions.

use log::warn;
use num_complex::Complex64;

use crate::domain::{IntensityMap, PointPattern, Raster, Window};
use crate::error::{Error, Result};
use crate::quadrature::{QuadratureScheme, SchemeOptions};
use crate::solver::{fit_mle, CoefficientVector, SolverConfig};
use crate::spectral::{ifft2, FrequencyOrder, Spectrum};

/// Spectrum of the kernel `beta`. The zero term is `beta_0`.
pub type BetaSpectrum = Spectrum;

/// Log-intensity entries above this are clamped before exponentiation.
pub const LOG_INTENSITY_CLAMP: f64 = 700.0;

/// `beta_{k_i} = psi_i + i psi_{K+i}` (unscaled), `beta_0 = intercept`.
pub fn coeffs_to_beta_spectrum(coef: &CoefficientVector, order: &FrequencyOrder) -> Result<BetaSpectrum> {
    let k = order.len();
    if coef.len() != 2 * k {
        return Err(Error::LengthMismatch { expected: 2 * k, actual: coef.len() });
    }
    let psi = coef.unscaled();
    let mut beta = Spectrum::new(coef.intercept);
    for (i, &f) in order.iter().enumerate() {
        beta.set(f, Complex64::new(psi[i], psi[k + i]));
    }
    Ok(beta)
}

/// Inverse of [`coeffs_to_beta_spectrum`]: the coefficient layout of `beta`
/// over `order`, with the given standardisation scales.
pub fn beta_spectrum_to_coeffs(beta: &BetaSpectrum, order: &FrequencyOrder, scales: &[f64]) -> Result<CoefficientVector> {
    let k = order.len();
    let mut psi = vec![0.0; 2 * k];
    for (i, &f) in order.iter().enumerate() {
        let v = beta.get(f);
        psi[i] = v.re;
        psi[k + i] = v.im;
    }
    CoefficientVector::new(beta.zero(), psi, scales.to_vec())
}

/// `beta * Z` on the pixel centers of an `nx x ny` grid, through the product
/// of the two spectra.
pub fn log_intensity(beta: &BetaSpectrum, z: &Spectrum, nx: usize, ny: usize, window: Window) -> Result<Raster> {
    ifft2(&beta.product(z), nx, ny, window)
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub map: IntensityMap,
    /// Some log-intensity entries exceeded [`LOG_INTENSITY_CLAMP`].
    pub clamped: bool,
}

/// `exp(beta * Z)` on an `nx x ny` grid.
pub fn predict_intensity(beta: &BetaSpectrum, z: &Spectrum, nx: usize, ny: usize, window: Window) -> Result<Prediction> {
    exp_clamped(&log_intensity(beta, z, nx, ny, window)?)
}

/// Elementwise `exp` of a log-intensity raster with the overflow clamp.
pub fn exp_clamped(log_rho: &Raster) -> Result<Prediction> {
    let mut clamped = false;
    let values = log_rho
        .values()
        .iter()
        .map(|&v| {
            if v > LOG_INTENSITY_CLAMP {
                clamped = true;
                LOG_INTENSITY_CLAMP.exp()
            } else {
                v.exp()
            }
        })
        .collect();
    if clamped {
        warn!("log-intensity exceeded {LOG_INTENSITY_CLAMP}; values were clamped");
    }
    let map = IntensityMap::new(Raster::new(log_rho.nx(), log_rho.ny(), log_rho.window(), values)?)?;
    Ok(Prediction { map, clamped })
}

/// Fitted `log rho(s) = beta_0 + beta Z(s)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LogLinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub converged: bool,
}

impl LogLinearFit {
    pub fn log_intensity(&self, z: &Raster) -> Result<Raster> {
        z.map(|v| self.intercept + self.slope * v)
    }

    pub fn predict(&self, z: &Raster) -> Result<Prediction> {
        exp_clamped(&self.log_intensity(z)?)
    }
}

/// Two-parameter Poisson fit of `log rho = beta_0 + beta Z` with the same
/// quadrature as the convolution model. `Z` is read at the containing pixel.
pub fn fit_loglinear_baseline(pattern: &PointPattern, z: &Raster, options: SchemeOptions, cfg: &SolverConfig) -> Result<LogLinearFit> {
    let (lo, hi) = z.min_max();
    if !(hi - lo > 1e-12 * lo.abs().max(hi.abs()).max(1e-300)) {
        return Err(Error::ConstantCovariate);
    }
    if z.window() != pattern.window() {
        return Err(Error::WindowMismatch(format!("covariate window {:?} vs pattern window {:?}", z.window(), pattern.window())));
    }
    let scheme = QuadratureScheme::with_columns(pattern, 1, options, |x, y, row| row[0] = z.lookup(x, y))?;
    let fit = fit_mle(&scheme, cfg)?;
    Ok(LogLinearFit { intercept: fit.coef.intercept, slope: fit.coef.unscaled()[0], converged: fit.converged })
}
