//! Reference-free hallucination detection: compare each learned
//! reconstruction against a TV reconstruction of the same k-space, for
//! clean and contaminated inputs, then ask whether any of the pair
//! metrics separates the two populations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{masked_iterative_fgsm, AttackSpec};
use crate::error::{Error, Result};
use crate::metrics::{pair_metrics, PairMetrics};
use crate::recon::model::ReconModel;
use crate::recon::train::TrainExample;
use crate::recon::tv::tv_reconstruct;

/// TV hyperparameters used for the reference reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvParams {
    pub lambda: f64,
    pub iters: usize,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            iters: 100,
        }
    }
}

/// Metrics on one (TV(z'), F(z')) reconstruction pair, with the TV image
/// as the reference for the asymmetric metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub contaminated: bool,
    pub metrics: PairMetrics,
}

/// Records plus warnings for samples skipped because the TV reference
/// did not converge.
#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub records: Vec<DetectionRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherSuspicious,
    LowerSuspicious,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorEval {
    pub metric: String,
    pub direction: Direction,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub overlap: f64,
}

pub const OVERLAP_BINS: usize = 20;

/// Run the detection experiment: for every sample, attack it, then emit
/// one record for the clean k-space and one for the contaminated one.
/// Per-sample attack seeds derive from `attack_spec.seed`, so the run is
/// deterministic and order-independent.
pub fn run_detection_experiment(
    examples: &[TrainExample],
    model: &ReconModel,
    attack_spec: &AttackSpec,
    tv: &TvParams,
) -> Result<DetectionOutcome> {
    if examples.is_empty() {
        return Err(Error::InvalidParam("detection needs at least one sample".into()));
    }
    let per_sample: Vec<Result<(Vec<DetectionRecord>, Option<String>)>> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let spec = AttackSpec {
                seed: attack_spec.seed.wrapping_add(i as u64),
                ..attack_spec.clone()
            };
            detect_one(ex, model, &spec, tv)
        })
        .collect();

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for r in per_sample {
        let (recs, warn) = r?;
        records.extend(recs);
        warnings.extend(warn);
    }
    Ok(DetectionOutcome { records, warnings })
}

fn detect_one(
    ex: &TrainExample,
    model: &ReconModel,
    spec: &AttackSpec,
    tv: &TvParams,
) -> Result<(Vec<DetectionRecord>, Option<String>)> {
    let attack = masked_iterative_fgsm(model, &ex.sample.kspace, &ex.sample.mask, &ex.maps, spec)?;
    let mut records = Vec::with_capacity(2);
    for (contaminated, z) in [
        (false, &ex.sample.kspace),
        (true, &attack.perturbed_kspace),
    ] {
        match detection_record(&ex.sample.id, contaminated, z, &ex.sample.mask, &ex.maps, model, tv)? {
            Some(rec) => records.push(rec),
            None => {
                return Ok((
                    Vec::new(),
                    Some(format!(
                        "sample {}: tv reference did not converge in {} iterations; skipped",
                        ex.sample.id, tv.iters
                    )),
                ));
            }
        }
    }
    Ok((records, None))
}

/// One detection record: metrics on the (TV(z), F(z)) pair for a single
/// k-space, with TV as the reference. Returns `None` when the TV
/// reference fails to converge (the caller should skip the sample).
pub fn detection_record(
    id: &str,
    contaminated: bool,
    z: &crate::numerics::tensor::ComplexTensor,
    mask: &crate::mri::mask::SamplingMask,
    maps: &crate::mri::coils::CoilMaps,
    model: &ReconModel,
    tv: &TvParams,
) -> Result<Option<DetectionRecord>> {
    let tv_res = tv_reconstruct(z, mask, maps, tv.lambda, tv.iters)?;
    if !tv_res.converged {
        return Ok(None);
    }
    let f_img = model.apply(z, mask, maps)?;
    Ok(Some(DetectionRecord {
        id: id.to_string(),
        contaminated,
        metrics: pair_metrics(&tv_res.image, &f_img)?,
    }))
}

/// Two normalized histograms over shared equal-width bins spanning the
/// pooled range of both samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedHistograms {
    /// `bins + 1` bin edges.
    pub edges: Vec<f64>,
    pub p_a: Vec<f64>,
    pub p_b: Vec<f64>,
}

pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> Result<SharedHistograms> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParam("histogram needs nonempty inputs".into()));
    }
    if bins < 2 {
        return Err(Error::InvalidParam("histogram needs >= 2 bins".into()));
    }
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Numeric("histogram saw non-finite values".into()));
    }
    // Degenerate pooled range (all values identical): everything lands in
    // the first bin of a unit-width grid.
    let width = if lo == hi { 1.0 } else { (hi - lo) / bins as f64 };
    let bin_of = |v: f64| -> usize { (((v - lo) / width) as usize).min(bins - 1) };
    let mut p_a = vec![0.0; bins];
    let mut p_b = vec![0.0; bins];
    for &v in a {
        p_a[bin_of(v)] += 1.0 / a.len() as f64;
    }
    for &v in b {
        p_b[bin_of(v)] += 1.0 / b.len() as f64;
    }
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(SharedHistograms { edges, p_a, p_b })
}

/// Overlap coefficient of two samples: sum of bin-wise minima of the
/// shared-bin normalized frequencies. 1 means indistinguishable.
pub fn histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    let h = shared_histograms(a, b, bins)?;
    Ok(h.p_a.iter().zip(&h.p_b).map(|(x, y)| x.min(*y)).sum())
}

/// Pull the finite values of one metric out of the records, split by
/// class. Infinite PSNR values (identical pair) are excluded.
fn metric_values(records: &[DetectionRecord], metric: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut clean = Vec::new();
    let mut cont = Vec::new();
    for r in records {
        let v = match metric {
            "psnr" => match r.metrics.psnr.value {
                Some(v) => v,
                None => continue,
            },
            "nrmse" => r.metrics.nrmse,
            "ssim" => r.metrics.ssim,
            other => {
                return Err(Error::InvalidParam(format!("unknown metric {}", other)));
            }
        };
        if r.contaminated {
            cont.push(v);
        } else {
            clean.push(v);
        }
    }
    if clean.is_empty() || cont.is_empty() {
        return Err(Error::InvalidParam(format!(
            "threshold detector needs both classes for metric {}",
            metric
        )));
    }
    Ok((clean, cont))
}

/// Evaluate the threshold detector on one metric: sweep every midpoint
/// between sorted unique pooled values (plus outer boundary thresholds),
/// build the ROC, integrate AUC by the trapezoid rule, and pick the
/// direction (higher vs lower suspicious) that maximizes AUC.
pub fn threshold_detector_eval(records: &[DetectionRecord], metric: &str) -> Result<DetectorEval> {
    let (clean, cont) = metric_values(records, metric)?;

    let mut pooled: Vec<f64> = clean.iter().chain(&cont).cloned().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();
    let span = (pooled[pooled.len() - 1] - pooled[0]).max(1.0);
    let mut thresholds = vec![pooled[0] - span];
    for w in pooled.windows(2) {
        thresholds.push(0.5 * (w[0] + w[1]));
    }
    thresholds.push(pooled[pooled.len() - 1] + span);

    // Direction "higher is suspicious": flag value >= t.
    let mut roc: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| RocPoint {
            threshold: t,
            tpr: cont.iter().filter(|&&v| v >= t).count() as f64 / cont.len() as f64,
            fpr: clean.iter().filter(|&&v| v >= t).count() as f64 / clean.len() as f64,
        })
        .collect();
    roc.sort_by(|a, b| {
        a.fpr
            .partial_cmp(&b.fpr)
            .unwrap()
            .then(a.tpr.partial_cmp(&b.tpr).unwrap())
    });
    let auc_higher = trapezoid_auc(&roc);

    let (direction, auc) = if auc_higher >= 0.5 {
        (Direction::HigherSuspicious, auc_higher)
    } else {
        // Flipping the decision rule mirrors the ROC across the diagonal.
        (Direction::LowerSuspicious, 1.0 - auc_higher)
    };

    Ok(DetectorEval {
        metric: metric.to_string(),
        direction,
        roc,
        auc,
        overlap: histogram_overlap(&clean, &cont, OVERLAP_BINS)?,
    })
}

fn trapezoid_auc(roc: &[RocPoint]) -> f64 {
    let mut auc = 0.0;
    for w in roc.windows(2) {
        auc += 0.5 * (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr);
    }
    auc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricValue;
    use crate::mri::{gen_sample, sample_coil_maps, DatasetConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, contaminated: bool, ssim: f64) -> DetectionRecord {
        DetectionRecord {
            id: id.into(),
            contaminated,
            metrics: PairMetrics {
                psnr: MetricValue::finite(30.0 + ssim),
                nrmse: 1.0 - ssim,
                ssim,
            },
        }
    }

    #[test]
    fn overlap_identical_and_disjoint() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(histogram_overlap(&a, &a, 4).unwrap(), 1.0);
        let b = vec![10.0, 11.0, 12.0];
        assert_eq!(histogram_overlap(&a, &b, 10).unwrap(), 0.0);
        assert!(histogram_overlap(&a, &[], 4).is_err());
        assert!(histogram_overlap(&a, &b, 1).is_err());
    }

    #[test]
    fn overlap_of_shifted_uniforms_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.5..1.5)).collect();
        let ov = histogram_overlap(&a, &b, 20).unwrap();
        assert!((ov - 0.5).abs() < 0.05, "overlap {}", ov);
    }

    #[test]
    fn overlap_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..70).map(|_| rng.gen_range(-1.0..3.0)).collect();
            let ab = histogram_overlap(&a, &b, 12).unwrap();
            let ba = histogram_overlap(&b, &a, 12).unwrap();
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn perfectly_separated_auc_is_one() {
        let records = vec![
            record("a", false, 0.9),
            record("b", false, 0.95),
            record("c", true, 0.2),
            record("d", true, 0.3),
        ];
        let eval = threshold_detector_eval(&records, "ssim").unwrap();
        assert_eq!(eval.auc, 1.0);
        assert_eq!(eval.direction, Direction::LowerSuspicious);
        assert_eq!(eval.overlap, 0.0);
    }

    #[test]
    fn hand_built_four_point_case() {
        // Clean {1, 2}, contaminated {3, 4} on nrmse: by hand the ROC for
        // "higher is suspicious" passes through (0,0), (0,1), (1,1).
        let records = vec![
            record("a", false, 0.0),  // nrmse 1
            record("b", false, -1.0), // nrmse 2
            record("c", true, -2.0),  // nrmse 3
            record("d", true, -3.0),  // nrmse 4
        ];
        let eval = threshold_detector_eval(&records, "nrmse").unwrap();
        assert_eq!(eval.auc, 1.0);
        assert_eq!(eval.direction, Direction::HigherSuspicious);
        assert_eq!(eval.overlap, 0.0);
    }

    #[test]
    fn identical_distributions_auc_is_half() {
        let mut records = Vec::new();
        for (i, v) in [0.5, 0.6, 0.7, 0.8].iter().enumerate() {
            records.push(record(&format!("c{}", i), false, *v));
            records.push(record(&format!("x{}", i), true, *v));
        }
        let eval = threshold_detector_eval(&records, "ssim").unwrap();
        assert_eq!(eval.auc, 0.5);
        assert_eq!(eval.overlap, 1.0);
    }

    #[test]
    fn single_class_errors() {
        let records = vec![record("a", false, 0.5), record("b", false, 0.6)];
        assert!(threshold_detector_eval(&records, "ssim").is_err());
        assert!(threshold_detector_eval(&[], "ssim").is_err());
        let ok = vec![record("a", false, 0.5), record("b", true, 0.6)];
        assert!(threshold_detector_eval(&ok, "no_such_metric").is_err());
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut records = Vec::new();
        for i in 0..30 {
            records.push(record(&format!("c{}", i), false, rng.gen_range(0.3..0.9)));
            records.push(record(&format!("x{}", i), true, rng.gen_range(0.1..0.7)));
        }
        let base = threshold_detector_eval(&records, "ssim").unwrap();
        // exp is strictly monotone; transform the ssim channel.
        let transformed: Vec<DetectionRecord> = records
            .iter()
            .map(|r| {
                let mut t = r.clone();
                t.metrics.ssim = r.metrics.ssim.exp();
                t
            })
            .collect();
        let after = threshold_detector_eval(&transformed, "ssim").unwrap();
        assert!((base.auc - after.auc).abs() < 1e-12);
        assert_eq!(base.direction, after.direction);
    }

    #[test]
    fn one_sample_gives_two_records_and_zero_epsilon_is_identity() {
        let dcfg = DatasetConfig {
            n_samples: 1,
            height: 16,
            width: 16,
            acceleration: 2.0,
            center_fraction: 0.25,
            ..Default::default()
        };
        let examples = vec![TrainExample {
            sample: gen_sample(&dcfg, 3, 0).unwrap(),
            maps: sample_coil_maps(&dcfg, 3, 0).unwrap(),
        }];
        let model = ReconModel::ZeroFill;
        let spec = AttackSpec {
            epsilon: 0.0,
            alpha: 0.0,
            iters: 1,
            target: crate::attack::TargetShape::Line {
                length: 5,
                width: 2,
            },
            ..Default::default()
        };
        let out =
            run_detection_experiment(&examples, &model, &spec, &TvParams::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.warnings.is_empty());
        let (clean, cont) = (&out.records[0], &out.records[1]);
        assert!(!clean.contaminated && cont.contaminated);
        assert_eq!(clean.metrics.nrmse, cont.metrics.nrmse);
        assert_eq!(clean.metrics.ssim, cont.metrics.ssim);
    }
}
