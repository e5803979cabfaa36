//! Berman-Turner discretisation of the Poisson log-likelihood.
//!
//! The window is split into an `nx x ny` grid of pixels. Every pixel holds one
//! dummy point at its center; its area is shared equally between the dummy
//! point and the data points falling in it (counting weights). With `y_i =
//! 1/w_i` on data points and `0` on dummies the log-likelihood becomes the
//! weighted Poisson GLM objective
//!
//! `l(theta, psi) = sum_data eta(s) - sum_all w(s) exp(eta(s))`,
//! `eta(s) = theta + psi' z(s)`.

mod pixel;

use std::io::Write;

use log::warn;
use nalgebra::DMatrix;

use crate::domain::{pixel_index, PointPattern, Window};
use crate::error::{Error, Result};
use crate::parallel::{for_each_chunk_mut, Parallelism};
use crate::spectral::{DesignBasis, Frequency, FrequencyOrder, Spectrum, DEGENERATE_RMS};
use num_complex::Complex64;
pub(crate) use pixel::MassSpectrum;
use pixel::PixelBasis;

/// Dummy grid used when nothing else is requested (matches a 1024 x 786 window
/// at 8 x ~8.2 length units per pixel).
pub const DEFAULT_QUADRATURE_GRID: (usize, usize) = (128, 96);

#[derive(Debug, Clone, Copy)]
pub struct SchemeOptions {
    pub nx: usize,
    pub ny: usize,
    pub standardize: bool,
    /// Evaluate pixel-row sums through Fourier identities instead of the
    /// dense design (only for schemes built by [`build_scheme`]).
    pub structured: bool,
    pub parallelism: Parallelism,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            nx: DEFAULT_QUADRATURE_GRID.0,
            ny: DEFAULT_QUADRATURE_GRID.1,
            standardize: true,
            structured: true,
            parallelism: Parallelism::default(),
        }
    }
}

impl SchemeOptions {
    pub fn grid(nx: usize, ny: usize) -> Self {
        Self { nx, ny, ..Self::default() }
    }
}

/// Quadrature points, weights and (standardised) design matrix.
///
/// Rows are ordered data points first, then one dummy per pixel in raster
/// order. The intercept column is implicit.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    window: Window,
    locations: Vec<(f64, f64)>,
    weights: Vec<f64>,
    n_data: usize,
    design: DMatrix<f64>,
    scales: Vec<f64>,
    data_sums: Vec<f64>,
    order: Option<FrequencyOrder>,
    dropped: Vec<Frequency>,
    pixels: Option<PixelBasis>,
}

/// Data and dummy locations with counting weights.
fn counting_layout(pattern: &PointPattern, nx: usize, ny: usize) -> (Vec<(f64, f64)>, Vec<f64>) {
    let window = pattern.window();
    let mut counts = vec![0usize; nx * ny];
    let data_pixels: Vec<usize> = pattern
        .points()
        .iter()
        .map(|&(x, y)| {
            let (i, j) = pixel_index(x, y, window, nx, ny);
            counts[j * nx + i] += 1;
            j * nx + i
        })
        .collect();
    let dx = window.width() / nx as f64;
    let dy = window.height() / ny as f64;
    let area = dx * dy;

    let mut locations = Vec::with_capacity(pattern.len() + nx * ny);
    let mut weights = Vec::with_capacity(pattern.len() + nx * ny);
    for (&p, &pix) in pattern.points().iter().zip(&data_pixels) {
        locations.push(p);
        weights.push(area / (1 + counts[pix]) as f64);
    }
    for j in 0..ny {
        for i in 0..nx {
            locations.push(((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy));
            weights.push(area / (1 + counts[j * nx + i]) as f64);
        }
    }
    (locations, weights)
}

impl QuadratureScheme {
    /// Generic constructor: `fill(x, y, row)` writes the `width` covariates at
    /// a location. Columns are standardised over the dummy (pixel) rows when
    /// `options.standardize` is set.
    pub fn with_columns<F>(pattern: &PointPattern, width: usize, options: SchemeOptions, fill: F) -> Result<Self>
    where
        F: Fn(f64, f64, &mut [f64]) + Sync + Send,
    {
        let (nx, ny) = (options.nx, options.ny);
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("quadrature grid must be at least 2 x 2, got {nx} x {ny}")));
        }
        if pattern.is_empty() {
            warn!("building a quadrature scheme for an empty point pattern");
        }
        let (locations, weights) = counting_layout(pattern, nx, ny);
        let n_rows = locations.len();
        let n_data = pattern.len();

        let mut rows = vec![0.0; n_rows * width];
        if width > 0 {
            const CHUNK: usize = 512;
            for_each_chunk_mut(&mut rows, CHUNK * width, options.parallelism, |c, chunk| {
                for (r, row) in chunk.chunks_mut(width).enumerate() {
                    let (x, y) = locations[c * CHUNK + r];
                    fill(x, y, row);
                }
            });
        }
        let mut design = DMatrix::from_row_slice(n_rows, width, &rows);
        drop(rows);

        let n_dummy = (n_rows - n_data) as f64;
        let mut scales = Vec::with_capacity(width);
        for (j, mut col) in design.column_iter_mut().enumerate() {
            let rms = (col.rows_range(n_data..).iter().map(|v| v * v).sum::<f64>() / n_dummy).sqrt();
            if !(rms >= DEGENERATE_RMS) {
                return Err(Error::DegenerateColumn { column: j, rms });
            }
            if options.standardize {
                col /= rms;
                scales.push(rms);
            } else {
                scales.push(1.0);
            }
        }

        let data_sums = (0..width).map(|j| design.column(j).rows_range(0..n_data).sum()).collect();
        Ok(Self {
            window: pattern.window(),
            locations,
            weights,
            n_data,
            design,
            scales,
            data_sums,
            order: None,
            dropped: Vec::new(),
            pixels: None,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Observed count n(W).
    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn n_rows(&self) -> usize {
        self.locations.len()
    }

    /// Number of non-intercept columns.
    pub fn n_columns(&self) -> usize {
        self.design.ncols()
    }

    pub fn locations(&self) -> &[(f64, f64)] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_data(&self, row: usize) -> bool {
        row < self.n_data
    }

    /// Standardised design, one row per quadrature point.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Column scales: `design[:, j] = raw[:, j] / scales[j]`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `sum_data z_j(s)` for every column.
    pub fn data_sums(&self) -> &[f64] {
        &self.data_sums
    }

    /// Effective frequency order for spectral schemes (degenerate frequencies
    /// removed).
    pub fn order(&self) -> Option<&FrequencyOrder> {
        self.order.as_ref()
    }

    pub fn dropped_frequencies(&self) -> &[Frequency] {
        &self.dropped
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `theta + design * psi`, skipping zero coefficients.
    pub fn linear_predictor(&self, theta: f64, psi: &[f64]) -> Vec<f64> {
        let cols: Vec<usize> = (0..psi.len()).collect();
        self.direction(theta, &cols, psi)
    }

    /// Column `j` of the design as a contiguous slice.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.design.nrows();
        &self.design.as_slice()[j * n..(j + 1) * n]
    }

    /// Copy of the scheme that always uses the dense design.
    pub fn dense_only(&self) -> Self {
        Self { pixels: None, ..self.clone() }
    }

    pub fn is_structured(&self) -> bool {
        self.pixels.is_some()
    }

    /// Rows that need the dense design.
    fn dense_rows(&self) -> usize {
        if self.pixels.is_some() {
            self.n_data
        } else {
            self.n_rows()
        }
    }

    /// `d_theta + sum_j d_j x_{cols_j}` over all rows.
    pub(crate) fn direction(&self, d_theta: f64, cols: &[usize], d: &[f64]) -> Vec<f64> {
        let mut out = vec![d_theta; self.n_rows()];
        let dense = self.dense_rows();
        for (&j, &dj) in cols.iter().zip(d) {
            if dj != 0.0 {
                let col = &self.column(j)[..dense];
                for (o, &x) in out[..dense].iter_mut().zip(col) {
                    *o += dj * x;
                }
            }
        }
        if let Some(px) = &self.pixels {
            px.synthesize(cols, d, &mut out[self.n_data..]);
        }
        out
    }

    /// `sum mass` and `X' mass` over all rows, plus the pixel mass spectrum
    /// when the structured route is active.
    pub(crate) fn mass_moments(&self, mass: &[f64], cols: &[usize]) -> (f64, Vec<f64>, Option<MassSpectrum>) {
        let total = mass.iter().sum::<f64>();
        let dense = self.dense_rows();
        let ms = self.pixels.as_ref().map(|px| px.transform(&mass[self.n_data..]));
        let moments = cols
            .iter()
            .map(|&j| {
                let mut v = dot(&self.column(j)[..dense], &mass[..dense]);
                if let (Some(px), Some(ms)) = (&self.pixels, &ms) {
                    v += px.column_mass(ms, j);
                }
                v
            })
            .collect();
        (total, moments, ms)
    }

    /// `[1, X_cols]' diag(mass) [1, X_cols]`. `ms` must come from
    /// [`Self::mass_moments`] on the same `mass`.
    pub(crate) fn weighted_gram(&self, cols: &[usize], mass: &[f64], ms: Option<&MassSpectrum>) -> DMatrix<f64> {
        let rows = self.dense_rows();
        let q = cols.len() + 1;
        let mut out = vec![0.0; q * q];
        if rows > 0 {
            let root: Vec<f64> = mass[..rows].iter().map(|m| m.sqrt()).collect();
            let mut xs = Vec::with_capacity(rows * q);
            xs.extend_from_slice(&root);
            for &j in cols {
                xs.extend(self.column(j)[..rows].iter().zip(&root).map(|(x, r)| x * r));
            }
            // SAFETY: `xs` is a column-major rows x q matrix and `out` a q x q
            // column-major buffer; the strides below stay inside both.
            unsafe {
                matrixmultiply::dgemm(
                    q,
                    rows,
                    q,
                    1.0,
                    xs.as_ptr(),
                    rows as isize,
                    1,
                    xs.as_ptr(),
                    1,
                    rows as isize,
                    0.0,
                    out.as_mut_ptr(),
                    1,
                    q as isize,
                );
            }
        }
        let mut gram = DMatrix::from_vec(q, q, out);
        if let Some(px) = &self.pixels {
            let local;
            let ms = match ms {
                Some(ms) => ms,
                None => {
                    local = px.transform(&mass[self.n_data..]);
                    &local
                }
            };
            gram[(0, 0)] += ms.total();
            for (a, &j) in cols.iter().enumerate() {
                let v = px.column_mass(ms, j);
                gram[(0, a + 1)] += v;
                gram[(a + 1, 0)] += v;
                for (b, &l) in cols.iter().enumerate().take(a + 1) {
                    let v = px.cross_mass(ms, j, l);
                    gram[(a + 1, b + 1)] += v;
                    if a != b {
                        gram[(b + 1, a + 1)] += v;
                    }
                }
            }
        }
        gram
    }

    /// Log-likelihood from a precomputed linear predictor.
    pub fn loglik_from_eta(&self, eta: &[f64]) -> f64 {
        let data: f64 = eta[..self.n_data].iter().sum();
        let integral: f64 = eta.iter().zip(&self.weights).map(|(&e, &w)| w * e.exp()).sum();
        data - integral
    }

    pub fn loglik(&self, theta: f64, psi: &[f64]) -> f64 {
        self.loglik_from_eta(&self.linear_predictor(theta, psi))
    }

    /// Gradient `(d/dtheta, d/dpsi)` from a precomputed linear predictor.
    pub fn gradient_from_eta(&self, eta: &[f64]) -> (f64, Vec<f64>) {
        let mass: Vec<f64> = eta.iter().zip(&self.weights).map(|(&e, &w)| w * e.exp()).collect();
        let cols: Vec<usize> = (0..self.n_columns()).collect();
        let (total, moments, _) = self.mass_moments(&mass, &cols);
        let g_psi = moments.iter().zip(&self.data_sums).map(|(m, s)| s - m).collect();
        (self.n_data as f64 - total, g_psi)
    }

    pub fn gradient(&self, theta: f64, psi: &[f64]) -> (f64, Vec<f64>) {
        self.gradient_from_eta(&self.linear_predictor(theta, psi))
    }

    /// Debug dump: `x,y,weight,is_data,z1,...,zp` (standardised columns).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "x,y,weight,is_data")?;
        for j in 0..self.n_columns() {
            write!(out, ",z{}", j + 1)?;
        }
        writeln!(out)?;
        for (r, (&(x, y), &w)) in self.locations.iter().zip(&self.weights).enumerate() {
            write!(out, "{x},{y},{w},{}", u8::from(self.is_data(r)))?;
            for j in 0..self.n_columns() {
                write!(out, ",{}", self.design[(r, j)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Quadrature scheme for the truncated log-linear model with covariates
/// `2 Re[Z_k phi_k(s)]` and `-2 Im[Z_k phi_k(s)]` over `order`.
///
/// Frequencies where the (normalised) covariate spectrum vanishes give zero
/// columns; they are dropped with a warning and listed in
/// [`QuadratureScheme::dropped_frequencies`].
pub fn build_scheme(
    pattern: &PointPattern,
    spectrum: &Spectrum,
    order: &FrequencyOrder,
    options: SchemeOptions,
) -> Result<QuadratureScheme> {
    if options.nx < 8 || options.ny < 8 {
        return Err(Error::InvalidGrid(format!(
            "quadrature grid must be at least 8 x 8, got {} x {}",
            options.nx, options.ny
        )));
    }
    let window = pattern.window();
    let mut kept = Vec::with_capacity(order.len());
    let mut dropped = Vec::new();
    for &k in order.iter() {
        // grid RMS of both columns is sqrt(2)|Z_k| below the Nyquist limit
        if (2.0f64).sqrt() * spectrum.get(k).norm() < DEGENERATE_RMS {
            warn!("dropping frequency {k}: covariate coefficient is zero");
            dropped.push(k);
        } else {
            kept.push(k);
        }
    }
    let order = FrequencyOrder::new(kept)?;
    let basis = DesignBasis::new(spectrum, &order, window);
    let mut scheme = QuadratureScheme::with_columns(pattern, basis.width(), options, |x, y, row| {
        basis.fill_row(x, y, row)
    })?;
    if options.structured {
        let k = order.len();
        let freqs = (0..2 * k).map(|j| order.get(j % k)).collect();
        let amps = (0..2 * k)
            .map(|j| {
                let z = basis.coefficients()[j % k] / scheme.scales[j];
                if j < k {
                    z
                } else {
                    z * Complex64::i()
                }
            })
            .collect();
        scheme.pixels = Some(PixelBasis::new(options.nx, options.ny, window, freqs, amps));
    }
    scheme.order = Some(order);
    scheme.dropped = dropped;
    Ok(scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spiral_order;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pattern(n: usize, window: Window, seed: u64) -> PointPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| (rng.random_range(0.0..window.width()), rng.random_range(0.0..window.height())))
            .collect();
        PointPattern::new(pts, window).unwrap()
    }

    fn test_spectrum(order: &FrequencyOrder) -> Spectrum {
        let mut s = Spectrum::new(1.0);
        for (i, &k) in order.iter().enumerate() {
            s.set(k, Complex64::new(0.2 / (1.0 + i as f64), 0.1 * ((i % 3) as f64 - 1.0)));
        }
        s
    }

    #[test]
    fn weights_partition_the_window() {
        let w = Window::STUDY;
        let pat = random_pattern(300, w, 1);
        for &(nx, ny) in &[(8, 8), (64, 48), (128, 96)] {
            let s = QuadratureScheme::with_columns(&pat, 0, SchemeOptions::grid(nx, ny), |_, _, _| {}).unwrap();
            assert!((s.total_weight() - 804864.0).abs() < 1e-6, "{nx}x{ny}");
            assert_eq!(s.n_data(), 300);
            assert_eq!(s.n_rows(), 300 + nx * ny);
        }
    }

    #[test]
    fn every_data_point_appears_once() {
        let w = Window::unit();
        let pat = random_pattern(57, w, 2);
        let s = QuadratureScheme::with_columns(&pat, 0, SchemeOptions::grid(8, 8), |_, _, _| {}).unwrap();
        assert_eq!(&s.locations()[..57], pat.points());
        assert!(s.weights().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn intercept_only_mle_is_closed_form() {
        let w = Window::STUDY;
        let pat = random_pattern(421, w, 3);
        let s = QuadratureScheme::with_columns(&pat, 0, SchemeOptions::grid(32, 24), |_, _, _| {}).unwrap();
        // l(theta) = n theta - e^theta |W| has its root at log(n/|W|)
        let theta = (421.0f64 / w.area()).ln();
        let (g, _) = s.gradient(theta, &[]);
        assert!(g.abs() < 1e-8 * 421.0);
    }

    #[test]
    fn scheme_columns_have_unit_rms_over_pixels() {
        let order = spiral_order(12);
        let spec = test_spectrum(&order);
        let pat = random_pattern(100, Window::STUDY, 4);
        let s = build_scheme(&pat, &spec, &order, SchemeOptions::grid(32, 24)).unwrap();
        for j in 0..24 {
            let col = s.design().column(j);
            let rms = (col.rows_range(100..).iter().map(|v| v * v).sum::<f64>() / (32.0 * 24.0)).sqrt();
            assert!((rms - 1.0).abs() < 1e-12);
            let k = order.get(j % 12);
            assert!((s.scales()[j] - 2f64.sqrt() * spec.get(k).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let order = spiral_order(4);
        let mut spec = test_spectrum(&order);
        spec.set(order.get(2), Complex64::new(0.0, 0.0));
        let pat = random_pattern(10, Window::STUDY, 5);
        let s = build_scheme(&pat, &spec, &order, SchemeOptions::grid(16, 16)).unwrap();
        assert_eq!(s.dropped_frequencies(), &[order.get(2)]);
        assert_eq!(s.n_columns(), 6);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let order = spiral_order(6);
        let spec = test_spectrum(&order);
        let w = Window::STUDY;
        let pat = random_pattern(250, w, 6);
        let s = build_scheme(&pat, &spec, &order, SchemeOptions::grid(16, 12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = (250.0f64 / w.area()).ln();
        for _ in 0..20 {
            let theta = base + rng.random_range(-0.5..0.5);
            let psi: Vec<f64> = (0..12).map(|_| rng.random_range(-0.3..0.3)).collect();
            let (gt, gp) = s.gradient(theta, &psi);
            let h = 1e-5;
            let fd_t = (s.loglik(theta + h, &psi) - s.loglik(theta - h, &psi)) / (2.0 * h);
            assert!((fd_t - gt).abs() <= 1e-5 * gt.abs().max(1.0));
            for j in 0..12 {
                let mut p = psi.clone();
                p[j] += h;
                let up = s.loglik(theta, &p);
                p[j] -= 2.0 * h;
                let down = s.loglik(theta, &p);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gp[j]).abs() <= 1e-5 * gp[j].abs().max(1.0), "{j}: {fd} vs {}", gp[j]);
            }
        }
    }

    #[test]
    fn loglik_is_concave_along_random_chords() {
        let order = spiral_order(4);
        let spec = test_spectrum(&order);
        let pat = random_pattern(80, Window::STUDY, 8);
        let s = build_scheme(&pat, &spec, &order, SchemeOptions::grid(16, 12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t1 = rng.random_range(-12.0..-6.0);
            let t2 = rng.random_range(-12.0..-6.0);
            let p1: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p2: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mid: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lm = s.loglik(0.5 * (t1 + t2), &mid);
            let avg = 0.5 * (s.loglik(t1, &p1) + s.loglik(t2, &p2));
            assert!(lm >= avg - 1e-10 * avg.abs().max(1.0));
        }
    }

    #[test]
    fn sequential_and_parallel_builds_agree() {
        let order = spiral_order(12);
        let spec = test_spectrum(&order);
        let pat = random_pattern(700, Window::STUDY, 10);
        let mut opts = SchemeOptions::grid(40, 30);
        opts.parallelism = Parallelism::Sequential;
        let a = build_scheme(&pat, &spec, &order, opts).unwrap();
        opts.parallelism = Parallelism::Rayon;
        let b = build_scheme(&pat, &spec, &order, opts).unwrap();
        assert_eq!(a.design(), b.design());
    }

    #[test]
    fn structured_route_matches_dense_design() {
        let order = spiral_order(40);
        let spec = test_spectrum(&order);
        let pat = random_pattern(250, Window::STUDY, 11);
        let s = build_scheme(&pat, &spec, &order, SchemeOptions::grid(36, 28)).unwrap();
        let d = s.dense_only();
        assert!(s.is_structured() && !d.is_structured());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let psi: Vec<f64> = (0..80).map(|_| rng.random_range(-0.2..0.2)).collect();
        let theta = (250.0f64 / 804864.0).ln();

        let (ea, eb) = (s.linear_predictor(theta, &psi), d.linear_predictor(theta, &psi));
        for (a, b) in ea.iter().zip(&eb) {
            assert!((a - b).abs() < 1e-11, "{a} {b}");
        }
        let (ga, gpa) = s.gradient(theta, &psi);
        let (gb, gpb) = d.gradient(theta, &psi);
        assert!((ga - gb).abs() < 1e-9);
        for (a, b) in gpa.iter().zip(&gpb) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} {b}");
        }

        let mass: Vec<f64> = eb.iter().zip(d.weights()).map(|(e, w)| w * e.exp()).collect();
        let cols = [0, 3, 17, 40, 41, 79];
        let (gs, gd) = (s.weighted_gram(&cols, &mass, None), d.weighted_gram(&cols, &mass, None));
        let scale = gd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((gs - gd).abs().max() < 1e-11 * scale);
    }
}
