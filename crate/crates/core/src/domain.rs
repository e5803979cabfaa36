//! Window geometry, point patterns, rasters and seeding.
//!
//! Rasters are stored row-major with `y` increasing: pixel `(i, j)` lives at
//! index `j * nx + i` and represents the location
//! `((i + 0.5) * width / nx, (j + 0.5) * height / ny)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular observation window `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    width: f64,
    height: f64,
}

impl Window {
    /// The 1024 x 786 window used throughout the simulation study.
    pub const STUDY: Window = Window { width: 1024.0, height: 786.0 };

    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(Error::InvalidWindow { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn unit() -> Self {
        Self { width: 1.0, height: 1.0 }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.height
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.height).contains(&y)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * self.width, 0.5 * self.height)
    }
}

impl Default for Window {
    fn default() -> Self {
        Self::STUDY
    }
}

/// A finite set of planar locations inside a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<(f64, f64)>,
    window: Window,
}

impl PointPattern {
    pub fn new(points: Vec<(f64, f64)>, window: Window) -> Result<Self> {
        if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !window.contains(x, y)) {
            return Err(Error::PointOutsideWindow {
                x,
                y,
                width: window.width,
                height: window.height,
            });
        }
        Ok(Self { points, window })
    }

    pub fn empty(window: Window) -> Self {
        Self { points: Vec::new(), window }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Real-valued raster on a regular pixel grid over a window.
///
/// This doubles as the covariate grid: `nx, ny >= 2` and every value finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    nx: usize,
    ny: usize,
    window: Window,
    values: Vec<f64>,
}

pub type CovariateGrid = Raster;

impl Raster {
    pub fn new(nx: usize, ny: usize, window: Window, values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("grid must be at least 2 x 2, got {nx} x {ny}")));
        }
        if values.len() != nx * ny {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for a {nx} x {ny} grid, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at pixel {k}")));
        }
        Ok(Self { nx, ny, window, values })
    }

    /// Build a raster by evaluating `f` at every pixel center.
    pub fn from_fn(nx: usize, ny: usize, window: Window, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let dx = window.width / nx as f64;
        let dy = window.height / ny as f64;
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = (j as f64 + 0.5) * dy;
            for i in 0..nx {
                values.push(f((i as f64 + 0.5) * dx, y));
            }
        }
        Self::new(nx, ny, window, values)
    }

    pub fn constant(nx: usize, ny: usize, window: Window, value: f64) -> Result<Self> {
        Self::new(nx, ny, window, vec![value; nx * ny])
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn pixel_width(&self) -> f64 {
        self.window.width / self.nx as f64
    }

    #[inline]
    pub fn pixel_height(&self) -> f64 {
        self.window.height / self.ny as f64
    }

    #[inline]
    pub fn pixel_area(&self) -> f64 {
        self.pixel_width() * self.pixel_height()
    }

    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.pixel_width(), (j as f64 + 0.5) * self.pixel_height())
    }

    /// Pixel containing `(x, y)`; points on the far edges map to the last pixel.
    #[inline]
    pub fn pixel_of(&self, x: f64, y: f64) -> (usize, usize) {
        pixel_index(x, y, self.window, self.nx, self.ny)
    }

    /// Value of the pixel containing `(x, y)`.
    pub fn lookup(&self, x: f64, y: f64) -> f64 {
        let (i, j) = self.pixel_of(x, y);
        self.get(i, j)
    }

    /// Bilinear interpolation between pixel centers, constant beyond the
    /// outermost centers.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = (x / self.pixel_width() - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = (y / self.pixel_height() - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(self.nx - 2);
        let j0 = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = self.get(i0, j0);
        let v10 = self.get(i0 + 1, j0);
        let v01 = self.get(i0, j0 + 1);
        let v11 = self.get(i0 + 1, j0 + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.nx, self.ny, self.window, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn same_geometry(&self, other: &Raster) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.window == other.window
    }
}

pub(crate) fn pixel_index(x: f64, y: f64, window: Window, nx: usize, ny: usize) -> (usize, usize) {
    let i = ((x / window.width * nx as f64).floor().max(0.0) as usize).min(nx - 1);
    let j = ((y / window.height * ny as f64).floor().max(0.0) as usize).min(ny - 1);
    (i, j)
}

/// Strictly positive intensity surface, in points per unit area.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap(Raster);

impl IntensityMap {
    pub fn new(raster: Raster) -> Result<Self> {
        if let Some((index, &value)) = raster.values.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveIntensity { index, value });
        }
        Ok(Self(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn window(&self) -> Window {
        self.0.window
    }

    /// Riemann sum of the intensity over the window.
    pub fn expected_count(&self) -> f64 {
        self.0.values.iter().sum::<f64>() * self.0.pixel_area()
    }

    pub fn max(&self) -> f64 {
        self.0.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.map(|v| v * factor)?)
    }
}

/// Free-function form of [`IntensityMap::expected_count`].
pub fn expected_count(map: &IntensityMap) -> f64 {
    map.expected_count()
}

/// Simulation seed. Replicate `m` of a run seeded with `s` uses `s + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn replicate(self, m: usize) -> Seed {
        Seed(self.0.wrapping_add(m as u64))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
