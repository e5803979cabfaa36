//! Two-dimensional transforms between rasters and Hermitian spectra.
//!
//! Coefficients use the pixel-center phase convention: `Z_k = (1/N) sum_s
//! Z(s) conj(phi_k(s))` where `s` runs over pixel centers. Any grid size is
//! supported; rustfft picks mixed-radix, Rader or Bluestein plans as needed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::{Frequency, Spectrum};
use crate::domain::{Raster, Window};
use crate::error::{Error, Result};
use crate::parallel::{for_each_chunk_mut, Parallelism};

#[inline]
fn signed_index(i: usize, n: usize) -> i32 {
    if i <= n / 2 {
        i as i32
    } else {
        i as i32 - n as i32
    }
}

#[inline]
fn bin(k: i32, n: usize) -> usize {
    k.rem_euclid(n as i32) as usize
}

/// Phase of `phi_k` at the first pixel center, `pi (kx/nx + ky/ny)`.
#[inline]
fn half_pixel_phase(k: Frequency, nx: usize, ny: usize) -> f64 {
    PI * (k.kx as f64 / nx as f64 + k.ky as f64 / ny as f64)
}

/// In-place 2-D transform of a row-major `nx * ny` buffer (unnormalised).
fn transform_2d(data: &mut [Complex64], nx: usize, ny: usize, direction: FftDirection, par: Parallelism) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(nx, direction);
    let col_fft = planner.plan_fft(ny, direction);

    run_batched(data, nx, row_fft.as_ref(), par);

    let mut transposed = vec![Complex64::default(); nx * ny];
    transpose(data, &mut transposed, nx, ny);
    run_batched(&mut transposed, ny, col_fft.as_ref(), par);
    transpose(&transposed, data, ny, nx);
}

fn run_batched(data: &mut [Complex64], len: usize, fft: &dyn Fft<f64>, par: Parallelism) {
    let rows = data.len() / len;
    let per_chunk = if par.is_parallel() { rows.div_ceil(64).max(1) } else { rows };
    for_each_chunk_mut(data, per_chunk * len, par, |_, chunk| fft.process(chunk));
}

/// `dst[i * rows + j] = src[j * cols + i]` for a `rows x cols` row-major source.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 32;
    for jb in (0..rows).step_by(B) {
        for ib in (0..cols).step_by(B) {
            for j in jb..(jb + B).min(rows) {
                for i in ib..(ib + B).min(cols) {
                    dst[i * rows + j] = src[j * cols + i];
                }
            }
        }
    }
}

/// Forward transform of a covariate raster.
///
/// The zero coefficient equals the grid mean. On even-sized grids the
/// Nyquist lines alias `k` with a partner that is also canonical (or with
/// itself); those coefficients are stored halved so that [`ifft2`] adding
/// both members reproduces the grid exactly.
pub fn fft2(grid: &Raster) -> Spectrum {
    fft2_with(grid, Parallelism::default())
}

pub fn fft2_with(grid: &Raster, par: Parallelism) -> Spectrum {
    let (nx, ny) = (grid.nx(), grid.ny());
    let n = (nx * ny) as f64;
    let mut data: Vec<Complex64> = grid.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(&mut data, nx, ny, FftDirection::Forward, par);

    let mut out = Spectrum::new(data[0].re / n);
    for j in 0..ny {
        let ky = signed_index(j, ny);
        for i in 0..nx {
            let kx = signed_index(i, nx);
            let k = Frequency::new(kx, ky);
            if !k.is_canonical() {
                continue;
            }
            let mut value = data[j * nx + i] / n * Complex64::from_polar(1.0, -half_pixel_phase(k, nx, ny));
            let partner = Frequency::new(
                signed_index(bin(-kx, nx), nx),
                signed_index(bin(-ky, ny), ny),
            );
            if partner.is_canonical() {
                value *= 0.5;
            }
            out.coefficients.insert(k, value);
        }
    }
    out
}

/// Evaluate the real function with Hermitian spectrum `spectrum` at the pixel
/// centers of an `nx x ny` grid over `window`.
///
/// Fails when a stored frequency exceeds the grid's Nyquist limit
/// (`2|kx| > nx` or `2|ky| > ny`).
pub fn ifft2(spectrum: &Spectrum, nx: usize, ny: usize, window: Window) -> Result<Raster> {
    ifft2_with(spectrum, nx, ny, window, Parallelism::default())
}

pub fn ifft2_with(spectrum: &Spectrum, nx: usize, ny: usize, window: Window, par: Parallelism) -> Result<Raster> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidGrid(format!("grid must be at least 2 x 2, got {nx} x {ny}")));
    }
    let mut data = vec![Complex64::default(); nx * ny];
    data[0] += spectrum.zero();
    for (k, c) in spectrum.iter() {
        if 2 * k.kx.unsigned_abs() as usize > nx || 2 * k.ky.unsigned_abs() as usize > ny {
            return Err(Error::FrequencyOutOfRange { freq: k, nx, ny });
        }
        let shift = Complex64::from_polar(1.0, half_pixel_phase(k, nx, ny));
        data[bin(k.ky, ny) * nx + bin(k.kx, nx)] += c * shift;
        data[bin(-k.ky, ny) * nx + bin(-k.kx, nx)] += (c * shift).conj();
    }
    transform_2d(&mut data, nx, ny, FftDirection::Inverse, par);
    Raster::new(nx, ny, window, data.into_iter().map(|z| z.re).collect())
}
