//! Fourier representation of covariates and kernels.
//!
//! Frequencies are measured in cycles per window, so `phi_k(s) =
//! exp(2 pi i (kx x / width + ky y / height))`. Real functions have Hermitian
//! spectra and only one representative of every `{k, -k}` pair is stored: the
//! one with `ky > 0`, or `ky == 0 && kx > 0`.

mod design;
mod fft;

pub use design::{design_row, standardize_columns, DesignBasis, DEGENERATE_RMS};
pub use fft::{fft2, fft2_with, ifft2, ifft2_with};

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest |Z_0| accepted by [`normalize_covariate`].
pub const ZERO_MEAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frequency {
    pub kx: i32,
    pub ky: i32,
}

impl Frequency {
    pub const ZERO: Frequency = Frequency { kx: 0, ky: 0 };

    pub const fn new(kx: i32, ky: i32) -> Self {
        Self { kx, ky }
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.kx == 0 && self.ky == 0
    }

    /// True for the stored member of a `{k, -k}` pair.
    #[inline]
    pub fn is_canonical(self) -> bool {
        self.ky > 0 || (self.ky == 0 && self.kx > 0)
    }

    /// The canonical member of the pair and whether `self` is its negation.
    pub fn canonical(self) -> (Frequency, bool) {
        if self.is_canonical() || self.is_zero() {
            (self, false)
        } else {
            (-self, true)
        }
    }

    /// Max-norm ring index.
    #[inline]
    pub fn ring(self) -> u32 {
        self.kx.unsigned_abs().max(self.ky.unsigned_abs())
    }
}

impl std::ops::Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Frequency {
        Frequency { kx: -self.kx, ky: -self.ky }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.kx, self.ky)
    }
}

/// Hermitian spectrum: a real zero-frequency coefficient plus one complex
/// coefficient per canonical frequency. Missing frequencies are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    zero: f64,
    coefficients: BTreeMap<Frequency, Complex64>,
}

impl Spectrum {
    pub fn new(zero: f64) -> Self {
        Self { zero, coefficients: BTreeMap::new() }
    }

    #[inline]
    pub fn zero(&self) -> f64 {
        self.zero
    }

    pub fn set_zero(&mut self, zero: f64) {
        self.zero = zero;
    }

    /// Set the coefficient at `freq`; a non-canonical frequency stores the
    /// conjugate value at its partner. Setting the zero frequency keeps only
    /// the real part.
    pub fn set(&mut self, freq: Frequency, value: Complex64) {
        if freq.is_zero() {
            self.zero = value.re;
            return;
        }
        let (canon, flipped) = freq.canonical();
        let v = if flipped { value.conj() } else { value };
        self.coefficients.insert(canon, v);
    }

    pub fn with(mut self, freq: Frequency, value: Complex64) -> Self {
        self.set(freq, value);
        self
    }

    /// Coefficient at any frequency, using Hermitian symmetry for the
    /// non-stored half.
    pub fn get(&self, freq: Frequency) -> Complex64 {
        if freq.is_zero() {
            return Complex64::new(self.zero, 0.0);
        }
        let (canon, flipped) = freq.canonical();
        let v = self.coefficients.get(&canon).copied().unwrap_or_default();
        if flipped {
            v.conj()
        } else {
            v
        }
    }

    /// Canonical frequencies and their coefficients, in frequency order.
    pub fn iter(&self) -> impl Iterator<Item = (Frequency, Complex64)> + '_ {
        self.coefficients.iter().map(|(&k, &v)| (k, v))
    }

    /// Number of stored canonical coefficients (excluding the zero term).
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Multiply every coefficient by a real factor.
    pub fn scaled(&self, factor: f64) -> Spectrum {
        Spectrum {
            zero: self.zero * factor,
            coefficients: self.coefficients.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }

    /// Pointwise product over the support of `self`; the result is the
    /// spectrum of the circular convolution on the unit-normalised window.
    pub fn product(&self, other: &Spectrum) -> Spectrum {
        Spectrum {
            zero: self.zero * other.zero,
            coefficients: self
                .coefficients
                .iter()
                .map(|(&k, &v)| (k, v * other.get(k)))
                .collect(),
        }
    }

    /// Keep only the listed canonical frequencies (and the zero term).
    pub fn restricted_to(&self, order: &FrequencyOrder) -> Spectrum {
        let mut out = Spectrum::new(self.zero);
        for &k in order.iter() {
            out.coefficients.insert(k, self.get(k));
        }
        out
    }
}

/// Ordered list of distinct canonical frequencies `k_1, ..., k_K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyOrder(Vec<Frequency>);

impl FrequencyOrder {
    pub fn new(freqs: Vec<Frequency>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &k in &freqs {
            if !k.is_canonical() || !seen.insert(k) {
                return Err(Error::InvalidGrid(format!("frequency {k} is duplicated or not canonical")));
            }
        }
        Ok(Self(freqs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Frequency> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Frequency] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Frequency {
        self.0[i]
    }

    pub fn position(&self, k: Frequency) -> Option<usize> {
        self.0.iter().position(|&f| f == k)
    }

    pub fn max_ring(&self) -> u32 {
        self.0.iter().map(|k| k.ring()).max().unwrap_or(0)
    }
}

/// First `k` canonical frequencies visited ring by ring (max-norm), each ring
/// traversed counter-clockwise from `(t, 0)`.
///
/// Ring `t` contributes `4t` canonical frequencies, so the first `2t(t+1)`
/// entries are exactly the rings `<= t`.
pub fn spiral_order(k: usize) -> FrequencyOrder {
    let mut out = Vec::with_capacity(k);
    let mut t = 1i32;
    while out.len() < k {
        // right edge, going up
        out.extend((0..=t).map(|ky| Frequency::new(t, ky)));
        // top edge, going left
        out.extend((-t..t).rev().map(|kx| Frequency::new(kx, t)));
        // left edge, going down, stopping above the non-canonical (-t, 0)
        out.extend((1..t).rev().map(|ky| Frequency::new(-t, ky)));
        t += 1;
    }
    out.truncate(k);
    FrequencyOrder(out)
}

/// The eleven truncation levels of the simulation study: the ring counts
/// `2(t+1)^2 + 2(t+1)` for `t = 1..=6` interleaved with the midpoints
/// `(t+1)^2 + (t+2)^2 + 2t + 3` for `t = 1..=5`.
pub fn study_truncation_levels() -> Vec<usize> {
    let mut ks: Vec<usize> = (1..=6usize).map(|t| 2 * (t + 1) * (t + 1) + 2 * (t + 1)).collect();
    ks.extend((1..=5usize).map(|t| (t + 1) * (t + 1) + (t + 2) * (t + 2) + 2 * t + 3));
    ks.sort_unstable();
    ks
}

/// Divide a covariate spectrum by its zero coefficient so that `Z_0 = 1`.
pub fn normalize_covariate(spectrum: &Spectrum) -> Result<Spectrum> {
    let z0 = spectrum.zero();
    if !(z0.abs() > ZERO_MEAN_TOLERANCE) {
        return Err(Error::ZeroMeanCovariate(z0));
    }
    if z0 == 1.0 {
        return Ok(spectrum.clone());
    }
    let mut out = spectrum.scaled(1.0 / z0);
    out.zero = 1.0;
    Ok(out)
}
