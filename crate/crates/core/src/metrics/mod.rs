//! Full-reference image quality metrics: MSE, PSNR, SSIM, UQI and VIF.

mod pixel;
mod structural;
mod vif;
mod window;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use pixel::{mse, psnr, psnr_from_mse, PSNR_CAP};
pub use structural::{ssim, uqi, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW, UQI_WINDOW};
pub use vif::{vif, vif_window, VIF_MIN_SIZE, VIF_NOISE_VAR, VIF_SCALES};

use crate::colorspace::RgbImage;
use crate::error::{Error, Result};

/// Row order used by every table.
pub const METRIC_NAMES: [&str; 5] = ["PSNR", "SSIM", "MSE", "UQI", "VIF"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub uqi: f64,
    pub vif: f64,
}

impl MetricReport {
    pub fn compute(pred: &RgbImage, truth: &RgbImage) -> Result<Self> {
        let mse = mse(pred, truth)?;
        Ok(Self {
            psnr: psnr_from_mse(mse),
            ssim: ssim(pred, truth)?,
            mse,
            uqi: uqi(pred, truth)?,
            vif: vif(truth, pred)?,
        })
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 5] {
        [self.psnr, self.ssim, self.mse, self.uqi, self.vif]
    }

    pub fn table(&self) -> String {
        let mut out = String::from("metric  value\n");
        for (name, v) in METRIC_NAMES.iter().zip(self.values()) {
            writeln!(out, "{name:<6}  {v:.4}").unwrap();
        }
        out
    }

    /// `name=value` lines with full precision.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for (name, v) in METRIC_NAMES.iter().zip(self.values()) {
            writeln!(out, "{}={v}", name.to_lowercase()).unwrap();
        }
        out
    }
}

/// Mean of every metric over `(pred, truth)` pairs, accumulated in list
/// order. VIF takes the ground truth as its reference.
pub fn evaluate_set(pairs: &[(RgbImage, RgbImage)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no image pairs to evaluate".into()));
    }
    let mut sum = [0.0; 5];
    for (pred, truth) in pairs {
        for (s, v) in sum.iter_mut().zip(MetricReport::compute(pred, truth)?.values()) {
            *s += v;
        }
    }
    let n = pairs.len() as f64;
    Ok(MetricReport {
        psnr: sum[0] / n,
        ssim: sum[1] / n,
        mse: sum[2] / n,
        uqi: sum[3] / n,
        vif: sum[4] / n,
    })
}

/// Metrics of several models side by side, one column per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub reports: Vec<MetricReport>,
}

impl ComparisonTable {
    pub fn new(columns: Vec<String>, reports: Vec<MetricReport>) -> Result<Self> {
        if columns.len() != reports.len() {
            return Err(Error::shape(format!(
                "{} columns but {} reports",
                columns.len(),
                reports.len()
            )));
        }
        Ok(Self { columns, reports })
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<6}", "metric");
        for c in &self.columns {
            write!(out, "  {c:>10}").unwrap();
        }
        out.push('\n');
        for (row, name) in METRIC_NAMES.iter().enumerate() {
            write!(out, "{name:<6}").unwrap();
            for r in &self.reports {
                write!(out, "  {:>10.4}", r.values()[row]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
