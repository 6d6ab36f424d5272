//! Image quality metrics (PSNR, NRMSE, SSIM) and paired reporting.
//!
//! Conventions fixed here and echoed into every report:
//! - PSNR peak is taken from the reference image (first argument).
//! - SSIM uses a 7x7 uniform window over fully interior positions,
//!   population moments, `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` with
//!   `L = max(reference)`.
//! - NRMSE is `||a - b||_2 / ||a||_2` with `a` the reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::RealTensor;

/// A metric value that may be the infinite sentinel (identical pair for
/// PSNR); serialized as null with a flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    pub infinite: bool,
}

impl MetricValue {
    pub fn finite(v: f64) -> Self {
        Self {
            value: Some(v),
            infinite: false,
        }
    }

    pub fn infinite() -> Self {
        Self {
            value: None,
            infinite: true,
        }
    }

    pub fn get(&self) -> f64 {
        match self.value {
            Some(v) => v,
            None => f64::INFINITY,
        }
    }
}

fn check_pair(a: &RealTensor, b: &RealTensor) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParam("empty images".into()));
    }
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; peak from the reference `a`.
/// Identical images return the infinite sentinel.
pub fn psnr(a: &RealTensor, b: &RealTensor) -> Result<MetricValue> {
    check_pair(a, b)?;
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(MetricValue::infinite());
    }
    let peak = a.max_value();
    Ok(MetricValue::finite(10.0 * (peak * peak / mse).log10()))
}

/// Normalized root mean squared error, `||a - b|| / ||a||`.
pub fn nrmse(a: &RealTensor, b: &RealTensor) -> Result<f64> {
    check_pair(a, b)?;
    let ref_norm = a.norm2();
    if ref_norm == 0.0 {
        return Err(Error::InvalidParam("zero reference image in nrmse".into()));
    }
    let diff: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(diff / ref_norm)
}

pub const SSIM_WINDOW: usize = 7;

/// Mean local SSIM with a 7x7 uniform window. `L` is the maximum of the
/// reference `a`. A constant-zero pair is defined as 1 (identical).
pub fn ssim(a: &RealTensor, b: &RealTensor) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w) = a.hw()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidParam(format!(
            "ssim needs images of at least {0}x{0}, got {1}x{2}",
            SSIM_WINDOW, h, w
        )));
    }
    let l = a.max_value();
    if l == 0.0 && b.max_value() == 0.0 && a.min_value() == 0.0 && b.min_value() == 0.0 {
        // Constant zero pair: identical by definition.
        return Ok(1.0);
    }
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let win = SSIM_WINDOW;
    let npix = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(h - win) {
        for c0 in 0..=(w - win) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + win {
                for c in c0..c0 + win {
                    let x = a.at(r, c);
                    let y = b.at(r, c);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let mu_a = sa / npix;
            let mu_b = sb / npix;
            let var_a = saa / npix - mu_a * mu_a;
            let var_b = sbb / npix - mu_b * mu_b;
            let cov = sab / npix - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Metrics for one (reference, test) image pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMetrics {
    pub psnr: MetricValue,
    pub nrmse: f64,
    pub ssim: f64,
}

pub fn pair_metrics(reference: &RealTensor, test: &RealTensor) -> Result<PairMetrics> {
    Ok(PairMetrics {
        psnr: psnr(reference, test)?,
        nrmse: nrmse(reference, test)?,
        ssim: ssim(reference, test)?,
    })
}

/// Per-sample report in the Table-1 layout: metrics on the zero-filled
/// input pair and on the reconstruction pair, plus the attack objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: String,
    pub input_pair: PairMetrics,
    pub recon_pair: PairMetrics,
    pub objective: f64,
}

/// Mean and population standard deviation of a list of values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row of the summary CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub dataset: String,
    pub pair: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

/// Aggregate reports into Table-1-style rows (mean and std per pair and
/// metric). Infinite PSNR values are excluded and surface through the
/// per-sample JSON lines instead.
pub fn aggregate(model: &str, dataset: &str, reports: &[MetricReport]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (pair_name, select) in [
        ("input", true),
        ("recon", false),
    ] {
        fn pick(r: &MetricReport, input: bool) -> &PairMetrics {
            if input {
                &r.input_pair
            } else {
                &r.recon_pair
            }
        }
        for metric in ["psnr", "nrmse", "ssim"] {
            let values: Vec<f64> = reports
                .iter()
                .filter_map(|r| match metric {
                    "psnr" => pick(r, select).psnr.value,
                    "nrmse" => Some(pick(r, select).nrmse),
                    _ => Some(pick(r, select).ssim),
                })
                .collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                model: model.into(),
                dataset: dataset.into(),
                pair: pair_name.into(),
                metric: metric.into(),
                mean,
                std,
            });
        }
    }
    rows
}
