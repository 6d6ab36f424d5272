//! Temporary parameterized probe for criterion-4 settings.
//! Usage: scratch_probe <model> <epochs> <lr> <alpha> <target_len> <n_attack>
//! Not part of the deliverable; delete before finishing.

use advmri::attack::{attack_loss, masked_iterative_fgsm, AttackSpec, TargetShape};
use advmri::io::checkpoint::{read_checkpoint, write_checkpoint};
use advmri::metrics::{mean_std, ssim};
use advmri::mri::forward::zero_fill;
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::recon::{train, ReconModel, TrainConfig, TrainExample, UnetLite, VarnetLite};
use advmri::Result;
use rayon::prelude::*;
use std::time::Instant;

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).cloned().unwrap_or_else(|| "unet".into());
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let alpha: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let target_len: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(11);
    let n_attack: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(10);

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
    let (train_set, held_all) = dataset.split_at(200);
    let held = &held_all[..n_attack];

    let mut model = match which.as_str() {
        "varnet" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 4, 0)?),
        "unet_nr" => ReconModel::UnetLite(UnetLite::new(32, 32, false, 0)?),
        _ => ReconModel::UnetLite(UnetLite::new(32, 32, true, 0)?),
    };
    let t0 = Instant::now();
    let cache = std::path::PathBuf::from(format!("/tmp/probe_{}_{}_{}", which, epochs, lr));
    if cache.with_extension("json").exists() {
        let (header, tensors) = read_checkpoint(&cache)?;
        model = ReconModel::from_checkpoint(&header.variant, &header.hyperparameters, &tensors)?;
        println!("loaded cached model {:?}", cache);
    } else {
        train(
            &mut model,
            train_set,
            &TrainConfig {
                epochs,
                learning_rate: lr,
                ..Default::default()
            },
        )?;
        write_checkpoint(
            &cache,
            model.variant_name(),
            model.hyperparameters(),
            &model.named_params(),
        )?;
    }
    let zf_ssim: Vec<f64> = held_all
        .iter()
        .map(|ex| ssim(&ex.sample.ground_truth, &zero_fill(&ex.sample.kspace).unwrap()).unwrap())
        .collect();
    let m_ssim: Vec<f64> = held_all
        .iter()
        .map(|ex| {
            ssim(
                &ex.sample.ground_truth,
                &model.apply(&ex.sample.kspace, &ex.sample.mask, &ex.maps).unwrap(),
            )
            .unwrap()
        })
        .collect();
    println!(
        "{} e{} lr{}: train {:.0}s, held ssim {:.4} (zf {:.4})",
        which,
        epochs,
        lr,
        t0.elapsed().as_secs_f64(),
        mean_std(&m_ssim).0,
        mean_std(&zf_ssim).0
    );

    let spec0 = AttackSpec {
        epsilon: 0.1,
        alpha,
        iters: 150,
        target: TargetShape::Line {
            length: target_len,
            width: 2,
        },
        ..Default::default()
    };
    let t0 = Instant::now();
    let rows: Vec<(f64, f64, f64)> = held
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let spec = AttackSpec {
                seed: i as u64,
                ..spec0.clone()
            };
            let res = masked_iterative_fgsm(&model, &ex.sample.kspace, &ex.sample.mask, &ex.maps, &spec)
                .unwrap();
            let base = attack_loss(
                &res.clean_recon,
                &res.clean_recon,
                &res.target_image,
                &res.target_mask,
            )
            .unwrap();
            let zf_c = zero_fill(&ex.sample.kspace).unwrap();
            let zf_p = zero_fill(&res.perturbed_kspace).unwrap();
            (
                ssim(&zf_c, &zf_p).unwrap(),
                ssim(&res.clean_recon, &res.perturbed_recon).unwrap(),
                res.best_loss / base,
            )
        })
        .collect();
    let ins: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rcs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let ok = ratios.iter().filter(|&&r| r <= 0.1).count();
    println!(
        "attack len{} a{}: {:.0}s | input ssim {:.4} | recon ssim {:.4} (drop {:.4}) | ratio mean {:.3} | <=10% on {}/{}",
        target_len,
        alpha,
        t0.elapsed().as_secs_f64(),
        mean_std(&ins).0,
        mean_std(&rcs).0,
        mean_std(&ins).0 - mean_std(&rcs).0,
        mean_std(&ratios).0,
        ok,
        rows.len()
    );
    Ok(())
}
