//! Intensity estimation for spatial point processes under a log-convolution
//! model `log rho = beta * Z`.
//!
//! The covariate image `Z` is decomposed with a 2-D FFT, the kernel `beta` is
//! truncated to the first `K` spiral frequencies and the resulting log-linear
//! Poisson model is fitted by penalised likelihood on a Berman-Turner
//! quadrature.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod model;
pub mod parallel;
pub mod quadrature;
pub mod scenario;
pub mod simulate;
pub mod solver;
pub mod spectral;

pub use domain::{expected_count, CovariateGrid, IntensityMap, PointPattern, Raster, Seed, Window};
pub use error::{Error, Result};
pub use model::{coeffs_to_beta_spectrum, log_intensity, predict_intensity, BetaSpectrum};
pub use parallel::Parallelism;
pub use quadrature::{build_scheme, QuadratureScheme, SchemeOptions};
pub use solver::{cbic, fit_adaptive, fit_adaptive_on, fit_mle, fit_path, fit_penalized, lambda_grid, CoefficientVector, FitResult, Penalty, PenaltyKind, SolverConfig};
pub use spectral::{fft2, ifft2, normalize_covariate, spiral_order, Frequency, FrequencyOrder, Spectrum};
