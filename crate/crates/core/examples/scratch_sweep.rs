//! Temporary scratch harness for tuning training configs. Not part of
//! the deliverable; delete before finishing.

use advmri::metrics::{mean_std, ssim};
use advmri::mri::forward::zero_fill;
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::recon::{train, ReconModel, TrainConfig, TrainExample, UnetLite, VarnetLite};
use advmri::Result;
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

    let zf_ssim: Vec<f64> = held
        .iter()
        .map(|ex| ssim(&ex.sample.ground_truth, &zero_fill(&ex.sample.kspace).unwrap()).unwrap())
        .collect();
    let (z_mean, _) = mean_std(&zf_ssim);
    println!("zero-fill held-out ssim {:.4}", z_mean);

    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("unet");
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05);

    let mut model = match which {
        "varnet" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 4, 0)?),
        _ => ReconModel::UnetLite(UnetLite::new(32, 32, true, 0)?),
    };
    let t0 = Instant::now();
    let trace = train(
        &mut model,
        train_set,
        &TrainConfig {
            epochs,
            learning_rate: lr,
            ..Default::default()
        },
    )?;
    let dt = t0.elapsed().as_secs_f64();
    let m_ssim: Vec<f64> = held
        .iter()
        .map(|ex| {
            ssim(
                &ex.sample.ground_truth,
                &model
                    .apply(&ex.sample.kspace, &ex.sample.mask, &ex.maps)
                    .unwrap(),
            )
            .unwrap()
        })
        .collect();
    let (m_mean, _) = mean_std(&m_ssim);
    println!(
        "{} epochs={} lr={}: loss {:.5}->{:.5}, held-out ssim {:.4} (zf {:.4}), {:.1}s",
        which,
        epochs,
        lr,
        trace[0],
        trace.last().unwrap(),
        m_mean,
        z_mean,
        dt
    );
    Ok(())
}
