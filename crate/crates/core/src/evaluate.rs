//! Replicate metrics and predictive assessment.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::domain::{IntensityMap, PointPattern};
use crate::error::{Error, Result};
use crate::model::BetaSpectrum;
use crate::solver::PenaltyKind;
use crate::scenario::Scenario;
use crate::spectral::FrequencyOrder;

/// Each canonical frequency stands for itself and its conjugate partner.
pub const PAIR_MULTIPLICITY: f64 = 2.0;

/// `(1/M) sum_m (truth - estimate_m)^2`.
pub fn mse_intercept(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, actual: 0 });
    }
    Ok(estimates.iter().map(|e| (truth - e).powi(2)).sum::<f64>() / estimates.len() as f64)
}

/// Integrated mean squared error of the kernel over `order`, the zero
/// frequency excluded: `sum_i 2 (1/M) sum_m |beta_i - beta_hat_i^(m)|^2`.
///
/// With the factor 2 this equals the mean over the window of the squared
/// error of the real kernel surface.
pub fn imse(estimates: &[BetaSpectrum], truth: &BetaSpectrum, order: &FrequencyOrder) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, actual: 0 });
    }
    let m = estimates.len() as f64;
    let mut total = 0.0;
    for &k in order.iter() {
        let t = truth.get(k);
        let sum: f64 = estimates.iter().map(|e| (e.get(k) - t).norm_sqr()).sum();
        total += PAIR_MULTIPLICITY * sum / m;
    }
    Ok(total)
}

/// `(TPR, FPR)` of a selected index set against the true support among
/// `total` coefficients. Either rate is `None` when undefined.
pub fn tpr_fpr(selected: &[usize], truth: &[usize], total: usize) -> (Option<f64>, Option<f64>) {
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let selected: BTreeSet<usize> = selected.iter().copied().filter(|&j| j < total).collect();
    let hits = selected.intersection(&truth).count();
    let noise = total.saturating_sub(truth.len());
    let false_hits = selected.len() - hits;
    let tpr = (!truth.is_empty()).then(|| hits as f64 / truth.len() as f64);
    let fpr = (noise > 0).then(|| false_hits as f64 / noise as f64);
    (tpr, fpr)
}

/// Area under the pixel-level ROC curve: pixels are ranked by predicted
/// intensity, `x` is the fraction of window area above a threshold and `y`
/// the fraction of points in that area. Equal-valued pixels form one step.
pub fn auc(map: &IntensityMap, pattern: &PointPattern) -> Result<f64> {
    if pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let raster = map.raster();
    if raster.window() != pattern.window() {
        return Err(Error::WindowMismatch(format!("map window {:?} vs pattern window {:?}", raster.window(), pattern.window())));
    }
    let values = raster.values();
    let mut counts = vec![0usize; values.len()];
    for &(x, y) in pattern.points() {
        let (i, j) = raster.pixel_of(x, y);
        counts[j * raster.nx() + i] += 1;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let n_pix = values.len() as f64;
    let n_pts = pattern.len() as f64;
    let (mut x0, mut y0, mut area) = (0.0, 0.0, 0.0);
    let mut start = 0;
    while start < idx.len() {
        let v = values[idx[start]];
        let mut end = start;
        let mut pts = 0;
        while end < idx.len() && values[idx[end]] == v {
            pts += counts[idx[end]];
            end += 1;
        }
        let x1 = end as f64 / n_pix;
        let y1 = y0 + pts as f64 / n_pts;
        area += (x1 - x0) * (y0 + y1) / 2.0;
        x0 = x1;
        y0 = y1;
        start = end;
    }
    Ok(area)
}

/// Aggregate over `M` replicates of one (scenario, method, K, E[N]) cell.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateReport {
    pub scenario: Scenario,
    pub method: PenaltyKind,
    pub k: usize,
    pub target_n: f64,
    pub mse: f64,
    pub imse: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub m: usize,
}

/// One replicate's estimate in the frequency layout used for scoring.
#[derive(Debug, Clone)]
pub struct ReplicateEstimate {
    pub beta: BetaSpectrum,
    /// Selected coefficient indices in the `2K` layout of the full order.
    pub support: Vec<usize>,
}

impl ReplicateReport {
    pub const CSV_HEADER: &'static str = "scenario,method,k,target_n,mse,log_mse,imse,log_imse,tpr,fpr,m";

    /// Scores `estimates` against `truth` over `order` (the fitted
    /// frequencies). TPR and FPR are averaged over replicates.
    pub fn aggregate(
        scenario: Scenario,
        method: PenaltyKind,
        order: &FrequencyOrder,
        target_n: f64,
        truth: &BetaSpectrum,
        true_support: &[usize],
        estimates: &[ReplicateEstimate],
    ) -> Result<Self> {
        let intercepts: Vec<f64> = estimates.iter().map(|e| e.beta.zero()).collect();
        let betas: Vec<BetaSpectrum> = estimates.iter().map(|e| e.beta.clone()).collect();
        let total = 2 * order.len();
        let rates: Vec<(Option<f64>, Option<f64>)> =
            estimates.iter().map(|e| tpr_fpr(&e.support, true_support, total)).collect();
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Ok(Self {
            scenario,
            method,
            k: order.len(),
            target_n,
            mse: mse_intercept(&intercepts, truth.zero())?,
            imse: imse(&betas, truth, order)?,
            tpr: mean(rates.iter().filter_map(|r| r.0).collect()),
            fpr: mean(rates.iter().filter_map(|r| r.1).collect()),
            m: estimates.len(),
        })
    }

    pub fn write_csv_row<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.10e}"));
        writeln!(
            out,
            "{},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{},{},{}",
            self.scenario,
            self.method,
            self.k,
            if self.target_n.is_finite() { self.target_n.to_string() } else { "NA".to_string() },
            self.mse,
            self.mse.ln(),
            self.imse,
            self.imse.ln(),
            opt(self.tpr),
            opt(self.fpr),
            self.m
        )
    }
}

/// Write a report table with header.
pub fn write_reports<W: Write>(reports: &[ReplicateReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", ReplicateReport::CSV_HEADER)?;
    for r in reports {
        r.write_csv_row(&mut out)?;
    }
    Ok(())
}
