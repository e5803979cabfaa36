use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{FrequencyOrder, Spectrum};
use crate::domain::Window;
use crate::error::{Error, Result};

/// Columns whose root-mean-square falls below this are rejected.
pub const DEGENERATE_RMS: f64 = 1e-12;

/// Evaluates the real covariate vector of the truncated log-linear model:
/// entry `i` is `2 Re[Z_i phi_i(s)]` and entry `K + i` is `-2 Im[Z_i phi_i(s)]`.
#[derive(Debug, Clone)]
pub struct DesignBasis {
    order: FrequencyOrder,
    coefficients: Vec<Complex64>,
    window: Window,
    max_kx: usize,
    max_ky: usize,
}

impl DesignBasis {
    pub fn new(spectrum: &Spectrum, order: &FrequencyOrder, window: Window) -> Self {
        let coefficients = order.iter().map(|&k| spectrum.get(k)).collect();
        let max_kx = order.iter().map(|k| k.kx.unsigned_abs() as usize).max().unwrap_or(0);
        let max_ky = order.iter().map(|k| k.ky.unsigned_abs() as usize).max().unwrap_or(0);
        Self { order: order.clone(), coefficients, window, max_kx, max_ky }
    }

    /// Number of real columns, `2K`.
    pub fn width(&self) -> usize {
        2 * self.order.len()
    }

    pub fn order(&self) -> &FrequencyOrder {
        &self.order
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Write the row for location `(x, y)` into `out` (length `2K`).
    pub fn fill_row(&self, x: f64, y: f64, out: &mut [f64]) {
        let k = self.order.len();
        debug_assert_eq!(out.len(), 2 * k);
        let ex = powers(2.0 * PI * x / self.window.width(), self.max_kx);
        let ey = powers(2.0 * PI * y / self.window.height(), self.max_ky);
        for (i, (freq, z)) in self.order.iter().zip(&self.coefficients).enumerate() {
            let px = ex[freq.kx.unsigned_abs() as usize];
            let px = if freq.kx < 0 { px.conj() } else { px };
            let py = ey[freq.ky.unsigned_abs() as usize];
            let py = if freq.ky < 0 { py.conj() } else { py };
            let v = z * px * py;
            out[i] = 2.0 * v.re;
            out[k + i] = -2.0 * v.im;
        }
    }

    pub fn row(&self, x: f64, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.fill_row(x, y, &mut out);
        out
    }
}

/// `[e^{i 0 t}, e^{i t}, ..., e^{i n t}]` computed directly for accuracy.
fn powers(theta: f64, n: usize) -> Vec<Complex64> {
    (0..=n).map(|m| Complex64::from_polar(1.0, m as f64 * theta)).collect()
}

/// Covariate vector at a single location.
pub fn design_row(spectrum: &Spectrum, order: &FrequencyOrder, s: (f64, f64), window: Window) -> Vec<f64> {
    DesignBasis::new(spectrum, order, window).row(s.0, s.1)
}

/// Rescale every column to unit root-mean-square over the rows of `design`
/// (the pixel grid). Returns the scaled matrix and the per-column scales, so
/// that `scaled[:, j] = design[:, j] / scales[j]`.
pub fn standardize_columns(design: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = design.nrows() as f64;
    let mut scaled = design.clone();
    let mut scales = Vec::with_capacity(design.ncols());
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let rms = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if !(rms >= DEGENERATE_RMS) {
            return Err(Error::DegenerateColumn { column: j, rms });
        }
        col /= rms;
        scales.push(rms);
    }
    Ok((scaled, scales))
}
