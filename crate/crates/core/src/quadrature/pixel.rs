//! Fourier shortcuts for the dummy (pixel-center) rows of the design.
//!
//! Every design column is `x_j(s) = a_j phi_{k_j}(s) + conj(a_j phi_{k_j}(s))`
//! with `a_j = Z_k / scale_j` for real-part columns and `i Z_k / scale_j` for
//! imaginary-part columns. For a real mass vector `m` over the pixels and
//! `M(k) = sum_p m_p phi_k(s_p)`:
//!
//! * `sum_p m_p x_j = 2 Re[a_j M(k_j)]`
//! * `sum_p m_p x_j x_l = 2 Re[a_j a_l M(k_j + k_l) + a_j conj(a_l) M(k_j - k_l)]`
//!
//! so one separable transform of `m` replaces a pass over all pixel rows.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::domain::Window;
use crate::spectral::Frequency;

#[derive(Debug, Clone)]
pub(crate) struct PixelBasis {
    nx: usize,
    ny: usize,
    /// Largest `|kx|` or `|ky|` over the columns.
    reach: i32,
    freqs: Vec<Frequency>,
    amps: Vec<Complex64>,
    /// `ex[(kx + 2 reach) * nx + i] = exp(2 pi i kx x_i / width)`.
    ex: Vec<Complex64>,
    ey: Vec<Complex64>,
}

/// `M(k)` on the box `|kx|, |ky| <= 2 reach`.
#[derive(Debug, Clone)]
pub(crate) struct MassSpectrum {
    span: i32,
    values: Vec<Complex64>,
}

impl MassSpectrum {
    #[inline]
    fn at(&self, kx: i32, ky: i32) -> Complex64 {
        let side = (2 * self.span + 1) as usize;
        self.values[(ky + self.span) as usize * side + (kx + self.span) as usize]
    }

    pub fn total(&self) -> f64 {
        self.at(0, 0).re
    }
}

fn phase_table(n: usize, extent: f64, span: i32) -> Vec<Complex64> {
    let mut out = Vec::with_capacity((2 * span as usize + 1) * n);
    for k in -span..=span {
        for i in 0..n {
            let centre = (i as f64 + 0.5) * extent / n as f64;
            out.push(Complex64::from_polar(1.0, 2.0 * PI * k as f64 * centre / extent));
        }
    }
    out
}

impl PixelBasis {
    pub fn new(nx: usize, ny: usize, window: Window, freqs: Vec<Frequency>, amps: Vec<Complex64>) -> Self {
        let reach = freqs.iter().map(|k| k.kx.abs().max(k.ky.abs())).max().unwrap_or(0);
        let ex = phase_table(nx, window.width(), 2 * reach);
        let ey = phase_table(ny, window.height(), 2 * reach);
        Self { nx, ny, reach, freqs, amps, ex, ey }
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    /// `M(k)` for the pixel masses `mass` (raster order).
    pub fn transform(&self, mass: &[f64]) -> MassSpectrum {
        debug_assert_eq!(mass.len(), self.n_pixels());
        let span = 2 * self.reach;
        let side = (2 * span + 1) as usize;
        let (nx, ny) = (self.nx, self.ny);
        // rows first: t[kx][j] = sum_i m_ij ex[kx][i], kx >= 0 only since
        // the masses are real and t[-kx] = conj(t[kx])
        let half = span as usize + 1;
        let mut t = vec![Complex64::default(); half * ny];
        for kxi in 0..half {
            let off = (kxi + span as usize) * nx;
            let ex = &self.ex[off..off + nx];
            for j in 0..ny {
                let row = &mass[j * nx..(j + 1) * nx];
                let (mut re, mut im) = (0.0, 0.0);
                for (m, e) in row.iter().zip(ex) {
                    re += m * e.re;
                    im += m * e.im;
                }
                t[kxi * ny + j] = Complex64::new(re, im);
            }
        }
        let mut values = vec![Complex64::default(); side * side];
        for kyi in 0..side {
            let ey = &self.ey[kyi * ny..(kyi + 1) * ny];
            for kx in -span..=span {
                let a = kx.unsigned_abs() as usize;
                let tr = &t[a * ny..(a + 1) * ny];
                let v: Complex64 = if kx >= 0 {
                    tr.iter().zip(ey).map(|(a, b)| a * b).sum()
                } else {
                    tr.iter().zip(ey).map(|(a, b)| a.conj() * b).sum()
                };
                values[kyi * side + (kx + span) as usize] = v;
            }
        }
        MassSpectrum { span, values }
    }

    /// `sum_p m_p x_j(s_p)`.
    #[inline]
    pub fn column_mass(&self, ms: &MassSpectrum, j: usize) -> f64 {
        let k = self.freqs[j];
        2.0 * (self.amps[j] * ms.at(k.kx, k.ky)).re
    }

    /// `sum_p m_p x_j(s_p) x_l(s_p)`.
    #[inline]
    pub fn cross_mass(&self, ms: &MassSpectrum, j: usize, l: usize) -> f64 {
        let (a, b) = (self.freqs[j], self.freqs[l]);
        let (u, v) = (self.amps[j], self.amps[l]);
        2.0 * (u * v * ms.at(a.kx + b.kx, a.ky + b.ky) + u * v.conj() * ms.at(a.kx - b.kx, a.ky - b.ky)).re
    }

    /// `out[p] += sum_j coef_j x_{cols_j}(s_p)` over all pixels.
    pub fn synthesize(&self, cols: &[usize], coef: &[f64], out: &mut [f64]) {
        let r = self.reach;
        let side = (2 * r + 1) as usize;
        let span = 2 * r;
        // c[ky][kx] = sum of coef_j a_j at frequency (kx, ky)
        let mut c = vec![Complex64::default(); side * side];
        let mut any = false;
        for (&j, &b) in cols.iter().zip(coef) {
            if b != 0.0 {
                let k = self.freqs[j];
                c[(k.ky + r) as usize * side + (k.kx + r) as usize] += self.amps[j] * b;
                any = true;
            }
        }
        if !any {
            return;
        }
        let rows_used: Vec<usize> = (0..side).filter(|&kyi| c[kyi * side..(kyi + 1) * side].iter().any(|v| *v != Complex64::default())).collect();
        let (nx, ny) = (self.nx, self.ny);
        let mut u = vec![Complex64::default(); side];
        for j in 0..ny {
            u.iter_mut().for_each(|v| *v = Complex64::default());
            for &kyi in &rows_used {
                let ky = kyi as i32 - r;
                let e = self.ey[(ky + span) as usize * ny + j];
                for (kxi, v) in u.iter_mut().enumerate() {
                    *v += c[kyi * side + kxi] * e;
                }
            }
            let row = &mut out[j * nx..(j + 1) * nx];
            for (kxi, &uk) in u.iter().enumerate() {
                if uk == Complex64::default() {
                    continue;
                }
                let kx = kxi as i32 - r;
                let ex = &self.ex[(kx + span) as usize * nx..(kx + span + 1) as usize * nx];
                let (ur, ui) = (2.0 * uk.re, 2.0 * uk.im);
                for (o, e) in row.iter_mut().zip(ex) {
                    *o += ur * e.re - ui * e.im;
                }
            }
        }
    }
}
