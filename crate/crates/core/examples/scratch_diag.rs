//! Temporary diagnostics for attack convergence and TV iteration needs.
//! Not part of the deliverable; delete before finishing.

use advmri::attack::{attack_loss, masked_iterative_fgsm, AttackSpec};
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::numerics::tensor::RealTensor;
use advmri::recon::{train, tv_reconstruct, ReconModel, TrainConfig, TrainExample, UnetLite, VarnetLite};
use advmri::Result;

fn term_split(
    pert: &RealTensor,
    clean: &RealTensor,
    y_t: &RealTensor,
    m: &RealTensor,
) -> (f64, f64) {
    let mut inside = 0.0;
    let mut outside = 0.0;
    let mut n_in = 0.0;
    let mut n_out = 0.0;
    for i in 0..m.data.len() {
        if m.data[i] > 0.5 {
            inside += (pert.data[i] - y_t.data[i]).powi(2);
            n_in += 1.0;
        } else {
            outside += (pert.data[i] - clean.data[i]).powi(2);
            n_out += 1.0;
        }
    }
    (inside / n_in, outside / n_out)
}

fn main() -> Result<()> {
    let cfg = DatasetConfig {
        n_samples: 210,
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

    let which = std::env::args().nth(1).unwrap_or_else(|| "unet".into());
    let mut model = match which.as_str() {
        "varnet" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 4, 0)?),
        _ => ReconModel::UnetLite(UnetLite::new(32, 32, true, 0)?),
    };
    train(&mut model, train_set, &TrainConfig::default())?;
    println!("model {} trained", which);

    let ex = &held[0];
    for (alpha, iters) in [
        (0.01, 150),
        (0.005, 150),
        (0.002, 150),
        (0.01, 1000),
        (0.002, 1000),
    ] {
        let spec = AttackSpec {
            epsilon: 0.1,
            alpha,
            iters,
            seed: 7,
            ..Default::default()
        };
        let res =
            masked_iterative_fgsm(&model, &ex.sample.kspace, &ex.sample.mask, &ex.maps, &spec)?;
        let base = attack_loss(
            &res.clean_recon,
            &res.clean_recon,
            &res.target_image,
            &res.target_mask,
        )?;
        let (t_in, t_out) = term_split(
            &res.perturbed_recon,
            &res.clean_recon,
            &res.target_image,
            &res.target_mask,
        );
        println!(
            "alpha {:.3} T {:4}: baseline {:.4}, best {:.5} ({:.1}%), inside {:.5} ({:.1}%), outside {:.5}",
            alpha,
            iters,
            base,
            res.best_loss,
            100.0 * res.best_loss / base,
            t_in,
            100.0 * t_in / base,
            t_out
        );
    }

    // TV convergence needs.
    for iters in [100, 200, 400, 800] {
        let tv = tv_reconstruct(&ex.sample.kspace, &ex.sample.mask, &ex.maps, 1e-3, iters)?;
        println!(
            "tv iters {:4}: converged {}, final objective {:.6}",
            iters,
            tv.converged,
            tv.objective_trace.last().unwrap()
        );
    }
    Ok(())
}
