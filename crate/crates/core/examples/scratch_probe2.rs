//! Temporary instrumented attack-loop probe.
//! Usage: scratch_probe2 <model> <epochs> <lr> <alpha> <len> <n> <confine 0|1> [iters]
//! Not part of the deliverable; delete before finishing.

use advmri::attack::{attack_loss, render_target, AttackSpec, TargetShape};
use advmri::io::checkpoint::{read_checkpoint, write_checkpoint};
use advmri::metrics::{mean_std, ssim};
use advmri::mri::forward::zero_fill;
use advmri::mri::{gen_sample, sample_coil_maps, DatasetConfig};
use advmri::numerics::fft::ifft2c;
use advmri::numerics::tape::Tape;
use advmri::numerics::tensor::{ComplexTensor, RealTensor};
use advmri::recon::{train, ReconModel, TrainConfig, TrainExample, UnetLite, VarnetLite};
use advmri::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

struct Diag {
    input_ssim: f64,
    recon_ssim: f64,
    ratio: f64,
    inside: f64,
    outside: f64,
    delta_linf: f64,
    delta_img_rms: f64,
    frozen_frac: f64,
    clipped_frac: f64,
    best_iter: f64,
    zf_in_amp: f64,
    rec_in_amp: f64,
    zf_out_rms: f64,
    rec_out_rms: f64,
}

#[allow(clippy::too_many_arguments)]
fn attack_probe(
    model: &ReconModel,
    ex: &TrainExample,
    alpha_rel: f64,
    iters: usize,
    target: TargetShape,
    seed: u64,
    confine: bool,
) -> Result<Diag> {
    let z = &ex.sample.kspace;
    let mask = &ex.sample.mask;
    let maps = &ex.maps;
    let spec = AttackSpec {
        epsilon: 0.1,
        alpha: alpha_rel,
        iters,
        seed,
        target,
        mask_dilation: std::env::var("PROBE_DILATION")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(2),
        ..Default::default()
    };
    let clean_recon = model.apply(z, mask, maps)?;
    let render = render_target(&clean_recon, &spec)?;
    let m_count: f64 = render.mask.data.iter().sum();
    let out_count = render.mask.len() as f64 - m_count;

    let re_z = z.real_part();
    let im_z = z.imag_part();
    let re_max = re_z.data.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let eps = spec.epsilon * re_max;
    let alpha = spec.alpha * re_max;
    let (clip_lo, clip_hi) = (re_z.min_value(), re_z.max_value());

    let w = mask.width;
    let col_ok = |i: usize| !confine || mask.is_sampled(i % w);

    let init_scale = std::env::var("PROBE_INIT")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .map(|f| f * re_max)
        .unwrap_or(eps);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut delta = RealTensor::zeros(&re_z.shape);
    for (i, d) in delta.data.iter_mut().enumerate() {
        let v = rng.gen_range(-init_scale..init_scale);
        if col_ok(i) {
            *d = v;
        }
    }

    let evaluate = |delta: &RealTensor,
                    want_grad: bool|
     -> Result<(f64, Option<RealTensor>, RealTensor)> {
        let mut tape = Tape::new();
        let d_node = tape.leaf_real(delta.clone());
        let re_node = tape.leaf_real(re_z.clone());
        let re_adv = tape.add(re_node, d_node)?;
        let re_adv = tape.clip(re_adv, clip_lo, clip_hi)?;
        let z_adv = tape.complex_from_re(re_adv, &im_z)?;
        let (recon, _) = model.apply_taped(&mut tape, z_adv, mask, maps)?;
        let y_t_node = tape.leaf_real(render.y_t.clone());
        let d_t = tape.sub(recon, y_t_node)?;
        let d_t = tape.mul_const(d_t, &render.mask)?;
        let inside = tape.sum_squares(d_t)?;
        let inside = tape.scalar_scale(inside, 1.0 / m_count)?;
        let clean_node = tape.leaf_real(clean_recon.clone());
        let inv_m = render.mask.map(|v| 1.0 - v);
        let d_c = tape.sub(recon, clean_node)?;
        let d_c = tape.mul_const(d_c, &inv_m)?;
        let outside = tape.sum_squares(d_c)?;
        let outside = tape.scalar_scale(outside, 1.0 / out_count)?;
        let loss = tape.scalar_add(inside, outside)?;
        let lv = tape.value(loss).as_scalar()?;
        let img = tape.value(recon).as_real()?.clone();
        if want_grad {
            let grads = tape.backward(loss)?;
            Ok((lv, Some(grads.real(d_node)?.clone()), img))
        } else {
            Ok((lv, None, img))
        }
    };

    let delta0 = delta.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_delta = delta.clone();
    let mut best_it = 0usize;
    for it in 0..iters {
        let (loss, grad, _) = evaluate(&delta, true)?;
        if loss < best_loss {
            best_loss = loss;
            best_delta = delta.clone();
            best_it = it;
        }
        let grad = grad.unwrap();
        for (i, (d, g)) in delta.data.iter_mut().zip(&grad.data).enumerate() {
            if !col_ok(i) {
                continue;
            }
            let s = if *g > 0.0 {
                1.0
            } else if *g < 0.0 {
                -1.0
            } else {
                0.0
            };
            *d = (*d - alpha * s).clamp(-eps, eps);
        }
    }

    let (_, _, pert_recon) = evaluate(&best_delta, false)?;
    let mut re_adv = re_z.clone();
    for (r, d) in re_adv.data.iter_mut().zip(&best_delta.data) {
        *r = (*r + d).clamp(clip_lo, clip_hi);
    }
    let z_pert = ComplexTensor::from_parts(&re_adv, &im_z)?;
    let base = attack_loss(&clean_recon, &clean_recon, &render.y_t, &render.mask)?;

    let mut inside = 0.0;
    let mut outside = 0.0;
    for i in 0..render.mask.len() {
        if render.mask.data[i] > 0.5 {
            inside += (pert_recon.data[i] - render.y_t.data[i]).powi(2);
        } else {
            outside += (pert_recon.data[i] - clean_recon.data[i]).powi(2);
        }
    }
    let delta_c = ComplexTensor::from_real(&best_delta);
    let dimg = ifft2c(&delta_c)?;
    let n_img = (re_z.shape[re_z.shape.len() - 1] * re_z.shape[re_z.shape.len() - 2]) as f64;
    let rms = (dimg.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
        / (dimg.data.len() as f64))
        .sqrt()
        * (dimg.data.len() as f64 / n_img).sqrt();
    let active = best_delta
        .data
        .iter()
        .enumerate()
        .filter(|(i, _)| col_ok(*i))
        .count() as f64;
    let frozen = best_delta
        .data
        .iter()
        .zip(&delta0.data)
        .enumerate()
        .filter(|(i, (a, b))| col_ok(*i) && a.to_bits() == b.to_bits())
        .count() as f64;
    let clipped = best_delta
        .data
        .iter()
        .zip(&re_z.data)
        .enumerate()
        .filter(|(i, (d, r))| col_ok(*i) && (*r + *d < clip_lo || *r + *d > clip_hi))
        .count() as f64;
    let zf_c = zero_fill(z)?;
    let zf_p = zero_fill(&z_pert)?;
    let mut zf_in = 0.0;
    let mut rec_in = 0.0;
    let mut zf_out = 0.0;
    let mut rec_out = 0.0;
    for i in 0..render.mask.len() {
        if render.mask.data[i] > 0.5 {
            zf_in += (zf_p.data[i] - zf_c.data[i]).abs();
            rec_in += (pert_recon.data[i] - clean_recon.data[i]).abs();
        } else {
            zf_out += (zf_p.data[i] - zf_c.data[i]).powi(2);
            rec_out += (pert_recon.data[i] - clean_recon.data[i]).powi(2);
        }
    }
    Ok(Diag {
        zf_in_amp: zf_in / m_count,
        rec_in_amp: rec_in / m_count,
        zf_out_rms: (zf_out / out_count).sqrt(),
        rec_out_rms: (rec_out / out_count).sqrt(),
        input_ssim: ssim(&zero_fill(z)?, &zero_fill(&z_pert)?)?,
        recon_ssim: ssim(&clean_recon, &pert_recon)?,
        ratio: best_loss / base,
        inside: inside / m_count / base,
        outside: outside / out_count / base,
        delta_linf: best_delta.data.iter().fold(0.0_f64, |a, &v| a.max(v.abs())),
        delta_img_rms: rms,
        frozen_frac: frozen / active,
        clipped_frac: clipped / active,
        best_iter: best_it as f64,
    })
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).cloned().unwrap_or_else(|| "unet".into());
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let alpha: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let len: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(11);
    let n: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(8);
    let confine = args.get(7).map(|s| s == "1").unwrap_or(false);
    let iters: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(150);
    let shape = args.get(9).cloned().unwrap_or_else(|| "line".into());
    let target = match shape.as_str() {
        "ellipse" => TargetShape::Ellipse { rx: len, ry: len },
        "rect" => TargetShape::Rectangle { height: len, width: 2 },
        _ => TargetShape::Line { length: len, width: 2 },
    };

    let random_mask = std::env::var("PROBE_MASK").map(|s| s == "random").unwrap_or(false);
    let cfg = DatasetConfig {
        n_samples: 250,
        mask_kind: if random_mask {
            advmri::mri::mask::MaskKind::Random
        } else {
            advmri::mri::mask::MaskKind::Equispaced
        },
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
    let held = &held_all[..n];

    let mut model = match which.as_str() {
        "varnet" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 4, 0)?),
        "varnet8" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 8, 0)?),
        "varnet12" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 12, 0)?),
        "varnet16" => ReconModel::VarnetLite(VarnetLite::new(32, 32, 16, 0)?),
        "unet_nr" => ReconModel::UnetLite(UnetLite::new(32, 32, false, 0)?),
        _ => ReconModel::UnetLite(UnetLite::new(32, 32, true, 0)?),
    };
    let cache = std::path::PathBuf::from(format!(
        "/tmp/probe_{}_{}_{}_{}",
        which,
        epochs,
        lr,
        if random_mask { "rnd" } else { "eq" }
    ));
    if cache.with_extension("json").exists() {
        let (header, tensors) = read_checkpoint(&cache)?;
        model = ReconModel::from_checkpoint(&header.variant, &header.hyperparameters, &tensors)?;
    } else {
        let t0 = Instant::now();
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
            "trained {} e{} lr{} in {:.0}s, held ssim {:.4}",
            which,
            epochs,
            lr,
            t0.elapsed().as_secs_f64(),
            mean_std(&m_ssim).0
        );
    }

    let t0 = Instant::now();
    let rows: Vec<Diag> = held
        .par_iter()
        .enumerate()
        .map(|(i, ex)| attack_probe(&model, ex, alpha, iters, target, i as u64, confine).unwrap())
        .collect();
    let f = |g: fn(&Diag) -> f64| mean_std(&rows.iter().map(g).collect::<Vec<_>>()).0;
    let ok = rows.iter().filter(|d| d.ratio <= 0.1).count();
    println!(
        "{} a{} {}{} T{} conf={} : {:.0}s | in_ssim {:.4} rec_ssim {:.4} drop {:+.4} | ratio {:.3} (in {:.3} out {:.3}) <=10%: {}/{} | |d|inf {:.3} dimg_rms {:.4}",
        which, alpha, shape, len, iters, confine,
        t0.elapsed().as_secs_f64(),
        f(|d| d.input_ssim),
        f(|d| d.recon_ssim),
        f(|d| d.recon_ssim) - f(|d| d.input_ssim),
        f(|d| d.ratio),
        f(|d| d.inside),
        f(|d| d.outside),
        ok,
        rows.len(),
        f(|d| d.delta_linf),
        f(|d| d.delta_img_rms),
    );
    println!(
        "    frozen {:.3} clipped {:.3} best_iter {:.0} | in_amp zf {:.3} rec {:.3} (gain {:.2}) | out_rms zf {:.4} rec {:.4}",
        f(|d| d.frozen_frac),
        f(|d| d.clipped_frac),
        f(|d| d.best_iter),
        f(|d| d.zf_in_amp),
        f(|d| d.rec_in_amp),
        f(|d| d.rec_in_amp) / f(|d| d.zf_in_amp),
        f(|d| d.zf_out_rms),
        f(|d| d.rec_out_rms),
    );
    Ok(())
}
