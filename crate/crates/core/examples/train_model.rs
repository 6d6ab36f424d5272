//! Train a small learned reconstructor and compare it against the
//! zero-fill baseline on held-out phantoms.
//!
//! Run with: `cargo run --release --example train_model`

use advmri::metrics::{mean_std, ssim};
use advmri::mri::forward::zero_fill;
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::recon::{train, ReconModel, TrainConfig, TrainExample, UnetLite};
use advmri::Result;

fn main() -> Result<()> {
    let cfg = DatasetConfig {
        n_samples: 40,
        height: 32,
        width: 32,
        acceleration: 4.0,
        center_fraction: 0.08,
        ..Default::default()
    };
    let dataset: Vec<TrainExample> = (0..cfg.n_samples)
        .map(|i| {
            Ok(TrainExample {
                sample: gen_sample(&cfg, 11, i)?,
                maps: sample_coil_maps(&cfg, 11, i)?,
            })
        })
        .collect::<Result<_>>()?;
    let (train_set, held_out) = dataset.split_at(30);

    let mut model = ReconModel::UnetLite(UnetLite::new(cfg.height, cfg.width, true, 0)?);
    let tcfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        learning_rate: 0.05,
        ..Default::default()
    };
    let trace = train(&mut model, train_set, &tcfg)?;
    println!(
        "trained {} epochs; mean loss {:.5} -> {:.5}",
        trace.len(),
        trace.first().unwrap(),
        trace.last().unwrap()
    );

    let mut ssim_model = Vec::new();
    let mut ssim_zf = Vec::new();
    for ex in held_out {
        let recon = model.apply(&ex.sample.kspace, &ex.sample.mask, &ex.maps)?;
        let zf = zero_fill(&ex.sample.kspace)?;
        ssim_model.push(ssim(&ex.sample.ground_truth, &recon)?);
        ssim_zf.push(ssim(&ex.sample.ground_truth, &zf)?);
    }
    let (m_mean, m_std) = mean_std(&ssim_model);
    let (z_mean, z_std) = mean_std(&ssim_zf);
    println!("held-out ssim: model {:.4} ({:.4}), zero-fill {:.4} ({:.4})",
        m_mean, m_std, z_mean, z_std);
    Ok(())
}
