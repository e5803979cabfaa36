//! `predict`: intensity map from a kernel spectrum.

use std::path::PathBuf;

use clap::Args;
use convintensity::{io, predict_intensity};
use serde::{Deserialize, Serialize};

use crate::common::{self, Covariate};
use crate::error::CliResult;
use crate::fit::kernel_surface;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictArgs {
    /// Kernel spectrum CSV, e.g. the `beta.csv` written by `fit`.
    #[arg(long)]
    pub beta: Option<PathBuf>,
    /// Covariate grid file [default: built-in synthetic image].
    #[arg(long)]
    pub covariate: Option<PathBuf>,
    /// Output grid columns [default: covariate resolution].
    #[arg(long)]
    pub nx: Option<usize>,
    /// Output grid rows [default: covariate resolution].
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write PGM previews.
    #[arg(long)]
    pub pgm: bool,
    /// Blank kernel preview values below this fraction of the peak magnitude.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl PredictArgs {
    pub fn merge(&mut self, mut file: PredictArgs) {
        merge!(self, file; beta, covariate, nx, ny, out, threshold);
        self.pgm |= file.pgm;
    }

    pub fn resolve(self) -> CliResult<PredictConfig> {
        Ok(PredictConfig {
            beta: common::required("beta", self.beta)?,
            covariate: self.covariate,
            nx: self.nx.map(|v| common::at_least("nx", v, 2)).transpose()?,
            ny: self.ny.map(|v| common::at_least("ny", v, 2)).transpose()?,
            out: common::required("out", self.out)?,
            pgm: self.pgm,
            threshold: self.threshold,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictConfig {
    pub beta: PathBuf,
    pub covariate: Option<PathBuf>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub out: PathBuf,
    pub pgm: bool,
    pub threshold: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a PredictConfig,
    covariate: String,
    nx: usize,
    ny: usize,
    expected_count: f64,
    clamped: bool,
}

pub fn run(cfg: &PredictConfig) -> CliResult<()> {
    let covariate = Covariate::load(cfg.covariate.as_deref())?;
    let beta = common::read_spectrum(&cfg.beta)?;
    let nx = cfg.nx.unwrap_or(covariate.raster.nx());
    let ny = cfg.ny.unwrap_or(covariate.raster.ny());
    let window = covariate.window();
    let prediction = predict_intensity(&beta, &covariate.spectrum, nx, ny, window)?;

    common::create_dir(&cfg.out)?;
    common::write_file(&cfg.out.join("intensity.grid"), |out| io::write_grid(prediction.map.raster(), out))?;
    if cfg.pgm {
        common::write_pgm(&cfg.out.join("intensity.pgm"), prediction.map.raster(), None)?;
        common::write_pgm(&cfg.out.join("beta_surface.pgm"), &kernel_surface(&beta, nx, ny, window)?, cfg.threshold)?;
    }
    common::write_manifest(
        &cfg.out,
        &Manifest {
            command: "predict",
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            covariate: covariate.source,
            nx,
            ny,
            expected_count: prediction.map.expected_count(),
            clamped: prediction.clamped,
        },
    )
}
