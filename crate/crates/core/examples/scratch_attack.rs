//! Temporary scratch harness for the attack/detection acceptance
//! settings. Not part of the deliverable; delete before finishing.

use advmri::attack::{masked_iterative_fgsm, attack_loss, AttackSpec};
use advmri::detect::{histogram_overlap, threshold_detector_eval, DetectionRecord, TvParams, detection_record};
use advmri::metrics::{mean_std, ssim};
use advmri::mri::forward::zero_fill;
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::recon::{train, ReconModel, TrainConfig, TrainExample, UnetLite};
use advmri::Result;
use rayon::prelude::*;
use std::time::Instant;

fn main() -> Result<()> {
    let cfg = DatasetConfig {
        n_samples: 250,
        ..Default::default()
    };
    let dataset: Vec<TrainExample> = (0..cfg.n_samples)
        .map(|i| {
            Ok(TrainExample {
                sample: gen_sample(&cfg, 1, i)?,
                maps: sample_coil_maps(&cfg, 1, i)?,
            })
        })
        .collect::<Result<_>>()?;
    let (train_set, held) = dataset.split_at(200);
    let held = &held[..50];

    let mut model = ReconModel::UnetLite(UnetLite::new(32, 32, true, 0)?);
    let t0 = Instant::now();
    train(&mut model, train_set, &TrainConfig::default())?;
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());

    let spec = AttackSpec {
        epsilon: 0.1,
        alpha: 0.01,
        iters: 150,
        ..Default::default()
    };

    let t0 = Instant::now();
    let results: Vec<_> = held
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let s = AttackSpec {
                seed: i as u64,
                ..spec.clone()
            };
            let res = masked_iterative_fgsm(&model, &ex.sample.kspace, &ex.sample.mask, &ex.maps, &s)
                .unwrap();
            // epsilon = 0 baseline loss: delta = 0, recon_pert = clean.
            let base = attack_loss(
                &res.clean_recon,
                &res.clean_recon,
                &res.target_image,
                &res.target_mask,
            )
            .unwrap();
            (res, base)
        })
        .collect();
    println!("attacked 50 samples in {:.1}s", t0.elapsed().as_secs_f64());

    let mut input_ssims = Vec::new();
    let mut recon_ssims = Vec::new();
    let mut budget_ok = true;
    let mut frac_ok = 0;
    for (ex, (res, base)) in held.iter().zip(&results) {
        let max_d = res.delta_star.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_d > res.epsilon_abs * (1.0 + 1e-12) {
            budget_ok = false;
        }
        let zf_c = zero_fill(&ex.sample.kspace)?;
        let zf_p = zero_fill(&res.perturbed_kspace)?;
        input_ssims.push(ssim(&zf_c, &zf_p)?);
        recon_ssims.push(ssim(&res.clean_recon, &res.perturbed_recon)?);
        if res.best_loss <= 0.1 * base {
            frac_ok += 1;
        }
    }
    let (in_mean, _) = mean_std(&input_ssims);
    let (rc_mean, _) = mean_std(&recon_ssims);
    println!("(a) budget ok: {}", budget_ok);
    println!("(b) input-pair ssim mean {:.4} (need >= 0.99)", in_mean);
    println!(
        "(c) recon-pair ssim mean {:.4}, drop {:.4} (need >= 0.03)",
        rc_mean,
        in_mean - rc_mean
    );
    println!("(d) best_loss <= 10% baseline on {}/50 (need >= 40)", frac_ok);

    // Criterion 5: detection on the same run.
    let tv = TvParams::default();
    let t0 = Instant::now();
    let recs: Vec<DetectionRecord> = held
        .par_iter()
        .zip(&results)
        .flat_map(|(ex, (res, _))| {
            let mut v = Vec::new();
            for (cont, z) in [(false, &ex.sample.kspace), (true, &res.perturbed_kspace)] {
                if let Ok(Some(r)) = detection_record(
                    &ex.sample.id,
                    cont,
                    z,
                    &ex.sample.mask,
                    &ex.maps,
                    &model,
                    &tv,
                ) {
                    v.push(r);
                }
            }
            v
        })
        .collect();
    println!("detection records: {} in {:.1}s", recs.len(), t0.elapsed().as_secs_f64());
    for metric in ["psnr", "nrmse", "ssim"] {
        let eval = threshold_detector_eval(&recs, metric)?;
        let mut clean = Vec::new();
        let mut cont = Vec::new();
        for r in &recs {
            let v = match metric {
                "psnr" => match r.metrics.psnr.value {
                    Some(v) => v,
                    None => continue,
                },
                "nrmse" => r.metrics.nrmse,
                _ => r.metrics.ssim,
            };
            if r.contaminated { cont.push(v) } else { clean.push(v) }
        }
        let ov = histogram_overlap(&clean, &cont, 20)?;
        println!(
            "{:>5}: auc {:.3}, overlap {:.3} (need auc <= 0.75 and overlap >= 0.6 on 2 of 3)",
            metric, eval.auc, ov
        );
    }
    Ok(())
}
