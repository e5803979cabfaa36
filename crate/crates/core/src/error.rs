use thiserror::Error;

use crate::spectral::Frequency;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window {width} x {height}: both sides must be positive and finite")]
    InvalidWindow { width: f64, height: f64 },

    #[error("point ({x}, {y}) lies outside the {width} x {height} window")]
    PointOutsideWindow { x: f64, y: f64, width: f64, height: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("intensity map must be strictly positive and finite (pixel {index} = {value})")]
    NonPositiveIntensity { index: usize, value: f64 },

    #[error("covariate has zero mean (|Z_0| = {0:e}); the intercept is not identifiable")]
    ZeroMeanCovariate(f64),

    #[error("frequency ({kx}, {ky}) cannot be held by a {nx} x {ny} grid", kx = .freq.kx, ky = .freq.ky)]
    FrequencyOutOfRange { freq: Frequency, nx: usize, ny: usize },

    #[error("design column {column} is degenerate (rms {rms:e})")]
    DegenerateColumn { column: usize, rms: f64 },

    #[error("point pattern is empty")]
    EmptyPattern,

    #[error("normal equations are singular; reduce K or add a penalty")]
    SingularDesign,

    #[error("{columns} columns exceed the unpenalized fit cap of {cap}")]
    TooManyColumns { columns: usize, cap: usize },

    #[error("objective became non-finite")]
    NonfiniteObjective,

    #[error("every penalty weight is infinite")]
    AllInfiniteWeights,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("covariate is constant; the log-linear slope is not identifiable")]
    ConstantCovariate,

    #[error("windows differ: {0}")]
    WindowMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
