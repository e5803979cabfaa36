//! Pieces shared by the subcommands: enums, input loading and output files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use convintensity::scenario::{study_covariate, Scenario};
use convintensity::simulate::calibrate_intercept;
use convintensity::{fft2, io, log_intensity, normalize_covariate, predict_intensity, IntensityMap, PenaltyKind, PointPattern, Raster, Spectrum, Window};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mle,
    Ridge,
    Lasso,
}

impl Method {
    pub fn kind(self) -> PenaltyKind {
        match self {
            Method::Mle => PenaltyKind::None,
            Method::Ridge => PenaltyKind::Ridge,
            Method::Lasso => PenaltyKind::Lasso,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    Poisson,
    Thomas,
}

impl std::fmt::Display for Process {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Process::Poisson => "poisson",
            Process::Thomas => "thomas",
        })
    }
}

/// Penalty weights of the final path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// `1 / |psi_ridge|` from a preliminary ridge path.
    Adaptive,
    Unit,
}

/// Covariate image and its normalised spectrum.
pub struct Covariate {
    pub raster: Raster,
    pub spectrum: Spectrum,
    /// File it came from, or `synthetic`.
    pub source: String,
}

impl Covariate {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let (raster, source) = match path {
            Some(p) => (io::read_grid(reader(p)?).map_err(|e| CliError::io(p, e))?, p.display().to_string()),
            None => (study_covariate(), "synthetic".to_string()),
        };
        let spectrum = normalize_covariate(&fft2(&raster)).map_err(|e| CliError::field("covariate", e))?;
        Ok(Self { raster, spectrum, source })
    }

    pub fn window(&self) -> Window {
        self.raster.window()
    }

    /// Intensity map `exp(beta * Z)` on the covariate grid.
    pub fn intensity(&self, beta: &Spectrum) -> CliResult<IntensityMap> {
        let r = &self.raster;
        Ok(predict_intensity(beta, &self.spectrum, r.nx(), r.ny(), r.window())?.map)
    }

    /// The kernel `shape` with its zero term set so the expected count is
    /// `target`, and the resulting intensity map.
    pub fn calibrate(&self, shape: &Spectrum, target: f64) -> CliResult<(Spectrum, IntensityMap)> {
        let r = &self.raster;
        let mut beta = shape.clone();
        beta.set_zero(0.0);
        let lr = log_intensity(&beta, &self.spectrum, r.nx(), r.ny(), r.window())?;
        beta.set_zero(calibrate_intercept(&lr, target)?);
        let map = self.intensity(&beta)?;
        Ok((beta, map))
    }
}

/// Where a true kernel comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Scenario(Scenario),
    File(PathBuf),
}

impl Kernel {
    pub fn shape(&self) -> CliResult<Spectrum> {
        match self {
            Kernel::Scenario(s) => Ok(s.beta(0.0)),
            Kernel::File(p) => io::read_spectrum(reader(p)?).map_err(|e| CliError::io(p, e)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Kernel::Scenario(s) => s.to_string(),
            Kernel::File(p) => p.display().to_string(),
        }
    }
}

pub fn reader(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn read_pattern(path: &Path, window: Window) -> CliResult<PointPattern> {
    io::read_pattern(reader(path)?, window).map_err(|e| CliError::io(path, e))
}

pub fn read_spectrum(path: &Path) -> CliResult<Spectrum> {
    io::read_spectrum(reader(path)?).map_err(|e| CliError::io(path, e))
}

pub fn read_grid(path: &Path) -> CliResult<Raster> {
    io::read_grid(reader(path)?).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Create `path` and hand a buffered writer to `body`.
pub fn write_file<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> convintensity::Result<()>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    write_file(&dir.join("manifest.json"), |out| {
        out.write_all(text.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

/// PGM preview. With `threshold = Some(f)` values whose magnitude is below
/// `f` times the largest magnitude are shown as zero.
pub fn write_pgm(path: &Path, grid: &Raster, threshold: Option<f64>) -> CliResult<()> {
    let shown = match threshold {
        Some(f) => {
            let top = grid.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            grid.map(|v| if v.abs() >= f * top { v } else { 0.0 })?
        }
        None => grid.clone(),
    };
    write_file(path, |out| io::write_pgm(&shown, out))
}

/// Replicate file stem, e.g. `pattern_0007`.
pub fn replicate_name(prefix: &str, m: usize) -> String {
    format!("{prefix}_{m:04}")
}

pub fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::field(name, format!("must be positive and finite, got {v}")))
    }
}

pub fn at_least(name: &str, v: usize, min: usize) -> CliResult<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::field(name, format!("must be at least {min}, got {v}")))
    }
}

pub fn required<T>(name: &str, v: Option<T>) -> CliResult<T> {
    v.ok_or_else(|| CliError::field(name, "is required"))
}

/// `Some(p)` as a display string, for manifests.
pub fn path_string(p: &Path) -> String {
    p.display().to_string()
}
