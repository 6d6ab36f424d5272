//! Plant an artificial detail into a reconstruction with the masked
//! iterative signed-gradient attack, while keeping the k-space
//! perturbation within a tiny L-infinity budget.
//!
//! Run with: `cargo run --release --example run_attack`

use advmri::attack::{masked_iterative_fgsm, AttackSpec, TargetShape};
use advmri::metrics::ssim;
use advmri::mri::forward::zero_fill;
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::recon::{train, ReconModel, TrainConfig, TrainExample, UnetLite};
use advmri::Result;

fn main() -> Result<()> {
    let cfg = DatasetConfig {
        n_samples: 9,
        height: 32,
        width: 32,
        acceleration: 4.0,
        center_fraction: 0.08,
        ..Default::default()
    };
    let dataset: Vec<TrainExample> = (0..cfg.n_samples)
        .map(|i| {
            Ok(TrainExample {
                sample: gen_sample(&cfg, 3, i)?,
                maps: sample_coil_maps(&cfg, 3, i)?,
            })
        })
        .collect::<Result<_>>()?;

    // A briefly trained model; a freshly initialized residual model is
    // exactly zero-fill, which would make a dull victim.
    let mut model = ReconModel::UnetLite(UnetLite::new(cfg.height, cfg.width, true, 0)?);
    train(
        &mut model,
        &dataset[1..],
        &TrainConfig {
            epochs: 10,
            ..Default::default()
        },
    )?;
    let sample = &dataset[0].sample;
    let maps = &dataset[0].maps;

    let spec = AttackSpec {
        epsilon: 0.05,
        alpha: 0.005,
        iters: 100,
        target: TargetShape::Line {
            length: 11,
            width: 2,
        },
        ..Default::default()
    };
    let res = masked_iterative_fgsm(&model, &sample.kspace, &sample.mask, maps, &spec)?;

    let max_delta = res
        .delta_star
        .data
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    println!(
        "budget: |delta|_inf = {:.3e} <= epsilon_abs = {:.3e}",
        max_delta, res.epsilon_abs
    );
    println!(
        "loss: {:.3e} -> best {:.3e} over {} iterations",
        res.loss_trace.first().unwrap(),
        res.best_loss,
        res.loss_trace.len()
    );

    // The inputs look the same; the reconstructions do not.
    let zf_clean = zero_fill(&sample.kspace)?;
    let zf_pert = zero_fill(&res.perturbed_kspace)?;
    println!(
        "input-pair ssim  (zero-fill clean vs perturbed): {:.4}",
        ssim(&zf_clean, &zf_pert)?
    );
    println!(
        "recon-pair ssim  (model clean vs perturbed):     {:.4}",
        ssim(&res.clean_recon, &res.perturbed_recon)?
    );
    Ok(())
}
