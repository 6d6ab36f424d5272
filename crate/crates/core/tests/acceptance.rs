//! End-to-end acceptance gate. Each test covers one criterion and prints
//! a single pass/fail line; run with `--nocapture` to see them.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use advmri::attack::{attack_loss, masked_iterative_fgsm, AttackSpec};
use advmri::detect::{
    detection_record, histogram_overlap, threshold_detector_eval, DetectionRecord, TvParams,
};
use advmri::io::checkpoint::{read_checkpoint, write_checkpoint};
use advmri::io::ksc::{read_sample, write_sample};
use advmri::metrics::{mean_std, nrmse, psnr, ssim};
use advmri::mri::forward::zero_fill;
use advmri::mri::mask::{make_mask, MaskKind};
use advmri::mri::{gen_sample, sample_coil_maps, sample_seed, CoilMaps, DatasetConfig};
use advmri::numerics::fft::{fft2c, ifft2c};
use advmri::numerics::tape::Tape;
use advmri::numerics::tensor::{ComplexTensor, RealTensor};
use advmri::pipeline::{cmd_attack, cmd_detect, cmd_eval, cmd_phantom_gen, cmd_report, cmd_train, RunConfig};
use advmri::recon::{train, tv_reconstruct, ReconModel, TrainConfig, TrainExample, UnetLite, VarnetLite};

fn check(criterion: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("ACCEPTANCE {}: PASS", criterion),
        Err(e) => {
            println!("ACCEPTANCE {}: FAIL", criterion);
            std::panic::resume_unwind(e);
        }
    }
}

fn rand_real(shape: &[usize], rng: &mut ChaCha8Rng) -> RealTensor {
    RealTensor::new(
        shape.to_vec(),
        (0..shape.iter().product())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn rand_complex(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ComplexTensor {
    ComplexTensor::new(
        vec![1, h, w],
        (0..h * w)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_numerics() {
    check("1 numerics", || {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(100);

        // fft2c against a brute-force centered orthonormal DFT on 8x8.
        let x = rand_complex(8, 8, &mut rng);
        let y = fft2c(&x).unwrap();
        let n = 8usize;
        let shift = |i: usize| (i + n / 2) % n; // fftshift index map
        let scale = 1.0 / n as f64;
        for ko in 0..n {
            for lo in 0..n {
                // Output index ko,lo corresponds to centered frequency.
                let k = shift(ko);
                let l = shift(lo);
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    for c in 0..n {
                        let rs = shift(r);
                        let cs = shift(c);
                        let ang = -2.0 * std::f64::consts::PI
                            * ((k * rs) as f64 + (l * cs) as f64)
                            / n as f64;
                        acc += x.data[r * n + c] * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                let brute = acc * scale;
                let got = y.data[ko * n + lo];
                assert!(
                    (got - brute).norm() < 1e-12,
                    "dft mismatch at ({},{}): {} vs {}",
                    ko,
                    lo,
                    got,
                    brute
                );
            }
        }

        // Parseval: orthonormal transform preserves energy.
        let ex: f64 = x.data.iter().map(|z| z.norm_sqr()).sum();
        let ey: f64 = y.data.iter().map(|z| z.norm_sqr()).sum();
        assert!((ex - ey).abs() < 1e-10, "parseval: {} vs {}", ex, ey);
        let back = ifft2c(&y).unwrap();
        for (a, b) in x.data.iter().zip(&back.data) {
            assert!((a - b).norm() < 1e-12);
        }

        // 25 random taped graphs: gradient of a scalar output w.r.t. the
        // real k-space leaf matches central finite differences.
        for seed in 0..25u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let re0 = rand_real(&[1, 8, 8], &mut rng);
            let im = rand_real(&[1, 8, 8], &mut rng);
            let maps = rand_complex(8, 8, &mut rng);
            let pattern: Vec<f64> = (0..8)
                .map(|_| if rng.gen_bool(0.6) { 1.0 } else { 0.0 })
                .collect();
            let kernel = rand_real(&[2, 1, 3, 3], &mut rng);
            let bias = rand_real(&[2], &mut rng);
            let weights = rand_real(&[8, 8], &mut rng);
            let use_fft_round_trip = rng.gen_bool(0.5);
            let use_mask = rng.gen_bool(0.5);
            let use_maps = rng.gen_bool(0.5);
            let use_conv = rng.gen_bool(0.5);
            let use_pool = rng.gen_bool(0.5);
            let use_norm = rng.gen_bool(0.5);

            let run = |re: &RealTensor, want_grad: bool| -> (f64, Option<RealTensor>) {
                let mut tape = Tape::new();
                let re_node = tape.leaf_real(re.clone());
                let mut z = tape.complex_from_re(re_node, &im).unwrap();
                if use_fft_round_trip {
                    z = tape.fft2c(z).unwrap();
                    z = tape.ifft2c(z).unwrap();
                }
                if use_mask {
                    z = tape.mask_columns(z, &pattern).unwrap();
                }
                if use_maps {
                    let img = tape.ifft2c(z).unwrap();
                    let mag = tape.rss(img).unwrap();
                    z = tape.map_times_real(mag, &maps).unwrap();
                    z = tape.fft2c(z).unwrap();
                }
                let img = tape.ifft2c(z).unwrap();
                let mut x = tape.rss(img).unwrap();
                if use_norm {
                    let mx = tape.reduce_max(x).unwrap();
                    let mx = tape.scalar_max(mx, 1e-9).unwrap();
                    x = tape.div_by_scalar(x, mx).unwrap();
                }
                x = tape.mul_const(x, &weights).unwrap();
                if use_conv {
                    let xr = tape.reshape(x, &[1, 8, 8]).unwrap();
                    let kn = tape.leaf_real(kernel.clone());
                    let bn = tape.leaf_real(bias.clone());
                    let mut c = tape.conv2d(xr, kn, bn).unwrap();
                    if use_pool {
                        c = tape.avg_pool2(c).unwrap();
                        c = tape.upsample2(c).unwrap();
                    }
                    x = tape.reshape(c, &[2, 8, 8]).unwrap();
                }
                let loss = tape.sum_squares(x).unwrap();
                let lv = tape.value(loss).as_scalar().unwrap();
                if want_grad {
                    let g = tape.backward(loss).unwrap();
                    (lv, Some(g.real(re_node).unwrap().clone()))
                } else {
                    (lv, None)
                }
            };

            let (_, g) = run(&re0, true);
            let g = g.unwrap();
            let h = 1e-5;
            for i in (0..re0.len()).step_by(11) {
                let mut p = re0.clone();
                p.data[i] += h;
                let mut q = re0.clone();
                q.data[i] -= h;
                let fd = (run(&p, false).0 - run(&q, false).0) / (2.0 * h);
                let denom = g.data[i].abs().max(fd.abs()).max(1e-6);
                let rel = (g.data[i] - fd).abs() / denom;
                assert!(rel < 1e-4, "graph {}: component {} rel err {}", seed, i, rel);
            }
        }
        assert!(t0.elapsed().as_secs_f64() < 10.0, "criterion 1 too slow");
    });
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_tv() {
    check("2 tv reconstruction", || {
        // Monotone objective on an undersampled problem.
        let cfg = DatasetConfig {
            height: 32,
            width: 32,
            acceleration: 4.0,
            center_fraction: 0.08,
            ..Default::default()
        };
        let s = gen_sample(&cfg, 5, 0).unwrap();
        let maps = sample_coil_maps(&cfg, 5, 0).unwrap();
        let res = tv_reconstruct(&s.kspace, &s.mask, &maps, 1e-3, 150).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {:?}", w);
        }

        // Fully sampled, noiseless, lambda -> 0: recovers the image.
        let full_cfg = DatasetConfig {
            height: 16,
            width: 16,
            acceleration: 1.0,
            center_fraction: 0.99,
            ..Default::default()
        };
        let s = gen_sample(&full_cfg, 6, 0).unwrap();
        let maps = sample_coil_maps(&full_cfg, 6, 0).unwrap();
        let res = tv_reconstruct(&s.kspace, &s.mask, &maps, 1e-9, 60).unwrap();
        let worst = res
            .image
            .data
            .iter()
            .zip(&s.ground_truth.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-3, "recovery error {}", worst);

        // 1-D denoising against an exhaustive two-level grid search.
        let h = 16usize;
        let lambda = 0.05;
        let step: Vec<f64> = (0..h).map(|r| if r < h / 2 { 0.2 } else { 0.8 }).collect();
        let img = RealTensor::new(vec![h, 1], step.clone()).unwrap();
        let maps = CoilMaps::identity(h, 1);
        let mask = make_mask(1, 1.0, 0.99, MaskKind::Equispaced, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = advmri::mri::forward_model(&img, &maps, &mask, 0.0, &mut rng).unwrap();
        let res = tv_reconstruct(&z, &mask, &maps, lambda, 60_000).unwrap();

        // Oracle: best two-level piecewise-constant signal on a fine grid.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut a = 0.1;
        while a <= 0.3 {
            let mut b = 0.6;
            while b <= 0.9 {
                let data: f64 = step
                    .iter()
                    .enumerate()
                    .map(|(r, s)| {
                        let c = if r < h / 2 { a } else { b };
                        0.5 * (c - s) * (c - s)
                    })
                    .sum();
                let obj = data + lambda * (b - a).abs();
                if obj < best.0 {
                    best = (obj, a, b);
                }
                b += 1e-4;
            }
            a += 1e-4;
        }
        for (r, v) in res.image.data.iter().enumerate() {
            let want = if r < h / 2 { best.1 } else { best.2 };
            assert!((v - want).abs() < 1e-3, "row {}: {} vs oracle {}", r, v, want);
        }
    });
}

// ----------------------------------------------------- shared 3/4/5

const TRAIN_N: usize = 200;
const HELD_N: usize = 50;

fn acceptance_dataset() -> &'static Vec<TrainExample> {
    static DATA: OnceLock<Vec<TrainExample>> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = DatasetConfig {
            n_samples: TRAIN_N + HELD_N,
            ..Default::default()
        };
        (0..cfg.n_samples)
            .map(|i| TrainExample {
                sample: gen_sample(&cfg, 1, i).unwrap(),
                maps: sample_coil_maps(&cfg, 1, i).unwrap(),
            })
            .collect()
    })
}

fn trained_unet() -> &'static ReconModel {
    static MODEL: OnceLock<ReconModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let data = acceptance_dataset();
        let mut model = ReconModel::UnetLite(UnetLite::new(32, 32, true, 0).unwrap());
        train(&mut model, &data[..TRAIN_N], &TrainConfig::default()).unwrap();
        model
    })
}

fn held_out() -> &'static [TrainExample] {
    &acceptance_dataset()[TRAIN_N..]
}

fn mean_ssim_to_gt(model: &ReconModel, set: &[TrainExample]) -> f64 {
    let vals: Vec<f64> = set
        .iter()
        .map(|ex| {
            let img = model
                .apply(&ex.sample.kspace, &ex.sample.mask, &ex.maps)
                .unwrap();
            ssim(&ex.sample.ground_truth, &img).unwrap()
        })
        .collect();
    mean_std(&vals).0
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_training() {
    check("3 training beats zero-fill", || {
        let t0 = Instant::now();
        let data = acceptance_dataset();
        let held = held_out();
        let zf_ssim = mean_ssim_to_gt(&ReconModel::ZeroFill, held);

        let unet_ssim = mean_ssim_to_gt(trained_unet(), held);
        assert!(
            unet_ssim > zf_ssim,
            "unet_lite {} not above zero-fill {}",
            unet_ssim,
            zf_ssim
        );

        let mut varnet = ReconModel::VarnetLite(VarnetLite::new(32, 32, 4, 0).unwrap());
        train(&mut varnet, &data[..TRAIN_N], &TrainConfig::default()).unwrap();
        let varnet_ssim = mean_ssim_to_gt(&varnet, held);
        assert!(
            varnet_ssim > zf_ssim,
            "varnet_lite {} not above zero-fill {}",
            varnet_ssim,
            zf_ssim
        );
        assert!(
            t0.elapsed().as_secs_f64() < 300.0,
            "criterion 3 took {:.0}s",
            t0.elapsed().as_secs_f64()
        );
    });
}

// ---------------------------------------------------------------- 4

struct AttackRun {
    results: Vec<(advmri::attack::AttackResult, f64)>,
}

fn attack_run() -> &'static AttackRun {
    static RUN: OnceLock<AttackRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let model = trained_unet();
        let results = held_out()
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let spec = AttackSpec {
                    epsilon: 0.1,
                    alpha: 0.01,
                    iters: 150,
                    seed: sample_seed(9, i),
                    ..Default::default()
                };
                let res = masked_iterative_fgsm(
                    model,
                    &ex.sample.kspace,
                    &ex.sample.mask,
                    &ex.maps,
                    &spec,
                )
                .unwrap();
                let baseline = attack_loss(
                    &res.clean_recon,
                    &res.clean_recon,
                    &res.target_image,
                    &res.target_mask,
                )
                .unwrap();
                (res, baseline)
            })
            .collect();
        AttackRun { results }
    })
}

#[test]
fn criterion_4_attack_success() {
    check("4 attack success", || {
        let t0 = Instant::now();
        let run = attack_run();
        let held = held_out();
        assert!(run.results.len() >= 50);

        let mut input_ssims = Vec::new();
        let mut recon_ssims = Vec::new();
        let mut successes = 0usize;
        for (ex, (res, baseline)) in held.iter().zip(&run.results) {
            // (a) budget, exact.
            let max_d = res
                .delta_star
                .data
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(max_d <= res.epsilon_abs, "budget violated: {} > {}", max_d, res.epsilon_abs);

            let zf_clean = zero_fill(&ex.sample.kspace).unwrap();
            let zf_pert = zero_fill(&res.perturbed_kspace).unwrap();
            input_ssims.push(ssim(&zf_clean, &zf_pert).unwrap());
            recon_ssims.push(ssim(&res.clean_recon, &res.perturbed_recon).unwrap());
            if res.best_loss <= 0.1 * baseline {
                successes += 1;
            }
        }
        let (input_mean, _) = mean_std(&input_ssims);
        let (recon_mean, _) = mean_std(&recon_ssims);
        // (b) inputs indistinguishable.
        assert!(input_mean >= 0.99, "input-pair ssim mean {}", input_mean);
        // (c) reconstructions visibly diverge.
        assert!(
            recon_mean <= input_mean - 0.03,
            "recon-pair mean {} vs input-pair mean {}",
            recon_mean,
            input_mean
        );
        // (d) objective collapses on most samples.
        assert!(
            successes * 10 >= run.results.len() * 8,
            "best_loss <= 10% baseline on only {}/{}",
            successes,
            run.results.len()
        );
        assert!(
            t0.elapsed().as_secs_f64() < 600.0,
            "criterion 4 took {:.0}s",
            t0.elapsed().as_secs_f64()
        );
    });
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_detection_overlap() {
    check("5 detection overlap", || {
        let t0 = Instant::now();
        let model = trained_unet();
        let run = attack_run();
        let held = held_out();
        let tv = TvParams {
            lambda: 1e-3,
            iters: 400,
        };

        let records: Vec<DetectionRecord> = held
            .par_iter()
            .zip(&run.results)
            .flat_map(|(ex, (res, _))| {
                let mut recs = Vec::new();
                for (cont, z) in [(false, &ex.sample.kspace), (true, &res.perturbed_kspace)] {
                    if let Some(r) = detection_record(
                        &ex.sample.id,
                        cont,
                        z,
                        &ex.sample.mask,
                        &ex.maps,
                        model,
                        &tv,
                    )
                    .unwrap()
                    {
                        recs.push(r);
                    }
                }
                recs
            })
            .collect();
        assert!(records.len() >= 80, "only {} detection records", records.len());

        let mut indistinguishable = 0;
        for metric in ["psnr", "nrmse", "ssim"] {
            let eval = threshold_detector_eval(&records, metric).unwrap();
            let (clean, cont) = split_metric(&records, metric);
            let overlap = histogram_overlap(&clean, &cont, 20).unwrap();
            println!(
                "  detection {}: auc {:.3}, overlap {:.3}",
                metric, eval.auc, overlap
            );
            if overlap >= 0.6 && eval.auc <= 0.75 {
                indistinguishable += 1;
            }
        }
        assert!(
            indistinguishable >= 2,
            "metrics separate the classes too well"
        );

        // Epsilon = 0 control on a subset: records are identical pairs,
        // so the detector is exactly chance.
        let control: Vec<DetectionRecord> = held[..10]
            .par_iter()
            .map(|ex| {
                let spec = AttackSpec {
                    epsilon: 0.0,
                    alpha: 0.0,
                    iters: 1,
                    ..Default::default()
                };
                let res = masked_iterative_fgsm(
                    model,
                    &ex.sample.kspace,
                    &ex.sample.mask,
                    &ex.maps,
                    &spec,
                )
                .unwrap();
                let mut recs = Vec::new();
                for (cont, z) in [(false, &ex.sample.kspace), (true, &res.perturbed_kspace)] {
                    recs.push(
                        detection_record(
                            &ex.sample.id,
                            cont,
                            z,
                            &ex.sample.mask,
                            &ex.maps,
                            model,
                            &tv,
                        )
                        .unwrap()
                        .unwrap(),
                    );
                }
                recs
            })
            .flatten()
            .collect();
        for metric in ["nrmse", "ssim"] {
            let eval = threshold_detector_eval(&control, metric).unwrap();
            assert_eq!(eval.auc, 0.5, "epsilon=0 control auc for {}", metric);
        }
        assert!(
            t0.elapsed().as_secs_f64() < 600.0,
            "criterion 5 took {:.0}s",
            t0.elapsed().as_secs_f64()
        );
    });
}

fn split_metric(records: &[DetectionRecord], metric: &str) -> (Vec<f64>, Vec<f64>) {
    let mut clean = Vec::new();
    let mut cont = Vec::new();
    for r in records {
        let v = match metric {
            "psnr" => match r.metrics.psnr.value {
                Some(v) => v,
                None => continue,
            },
            "nrmse" => r.metrics.nrmse,
            _ => r.metrics.ssim,
        };
        if r.contaminated {
            cont.push(v);
        } else {
            clean.push(v);
        }
    }
    (clean, cont)
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_metric_axioms() {
    check("6 metric axioms", || {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let a = RealTensor::new(
            vec![16, 16],
            (0..256).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(nrmse(&a, &a).unwrap(), 0.0);
        let zero = RealTensor::zeros(&[16, 16]);
        assert!(nrmse(&zero, &a).is_err());

        // PSNR strictly decreasing means under growing noise.
        let mut means = Vec::new();
        for (li, sigma) in [0.01, 0.02, 0.05, 0.1, 0.2].iter().enumerate() {
            let mut vals = Vec::new();
            for trial in 0..20 {
                let mut nrng = ChaCha8Rng::seed_from_u64(600 + (li * 100 + trial) as u64);
                let noisy = RealTensor::new(
                    a.shape.clone(),
                    a.data
                        .iter()
                        .map(|v| v + sigma * nrng.gen_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap();
                vals.push(psnr(&a, &noisy).unwrap().get());
            }
            means.push(mean_std(&vals).0);
        }
        for w in means.windows(2) {
            assert!(w[1] < w[0], "psnr means not strictly ordered: {:?}", means);
        }

        // SSIM against an independently written sliding-window oracle.
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
            let x = RealTensor::new(
                vec![12, 12],
                (0..144).map(|_| rng.gen_range(0.0..1.0)).collect(),
            )
            .unwrap();
            let y = RealTensor::new(
                vec![12, 12],
                (0..144).map(|_| rng.gen_range(0.0..1.0)).collect(),
            )
            .unwrap();
            let got = ssim(&x, &y).unwrap();
            let want = ssim_oracle(&x, &y);
            assert!((got - want).abs() < 1e-10, "ssim {} vs oracle {}", got, want);
        }
    });
}

/// Straight-line SSIM: mean over all 7x7 windows of the SSIM formula
/// with population moments, L = max of the reference.
fn ssim_oracle(a: &RealTensor, b: &RealTensor) -> f64 {
    let (h, w) = (a.shape[0], a.shape[1]);
    let l = a.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    let win = 7;
    let mut vals = Vec::new();
    for r0 in 0..=(h - win) {
        for c0 in 0..=(w - win) {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for r in r0..r0 + win {
                for c in c0..c0 + win {
                    xs.push(a.data[r * w + c]);
                    ys.push(b.data[r * w + c]);
                }
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
            let vy = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
            let cov = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mx) * (y - my))
                .sum::<f64>()
                / n;
            vals.push(
                ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2)),
            );
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_determinism_and_formats() {
    check("7 determinism and formats", || {
        // KSC round trip, bit exact.
        let cfg = DatasetConfig {
            height: 16,
            width: 16,
            n_coils: 2,
            acceleration: 2.0,
            center_fraction: 0.25,
            noise_sigma: 0.02,
            ..Default::default()
        };
        let s = gen_sample(&cfg, 70, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sample(dir.path(), &s, false).unwrap();
        let back = read_sample(dir.path(), &s.id).unwrap();
        assert_eq!(s.kspace.data, back.kspace.data);
        assert_eq!(s.ground_truth.data, back.ground_truth.data);
        assert_eq!(s.mask, back.mask);

        // Checkpoint round trip, bit exact.
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let tensors = vec![
            ("w".to_string(), rand_real(&[3, 1, 3, 3], &mut rng)),
            ("b".to_string(), rand_real(&[3], &mut rng)),
        ];
        let ck = dir.path().join("model");
        write_checkpoint(&ck, "unet_lite", serde_json::json!({"residual": true}), &tensors)
            .unwrap();
        let (_, got) = read_checkpoint(&ck).unwrap();
        for ((na, ta), (nb, tb)) in tensors.iter().zip(&got) {
            assert_eq!(na, nb);
            assert_eq!(ta.data, tb.data);
        }

        // Two identical-seed pipeline runs: byte-identical artifacts.
        let run_cfg = RunConfig {
            data: DatasetConfig {
                n_samples: 3,
                height: 8,
                width: 8,
                acceleration: 2.0,
                center_fraction: 0.25,
                ..Default::default()
            },
            attack: AttackSpec {
                iters: 3,
                target: advmri::attack::TargetShape::Line {
                    length: 3,
                    width: 1,
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let mut run = || {
            let tmp = tempfile::tempdir().unwrap();
            cmd_phantom_gen(&run_cfg, tmp.path(), false).unwrap();
            cmd_train(&run_cfg, tmp.path(), false).unwrap();
            cmd_attack(&run_cfg, tmp.path(), false).unwrap();
            cmd_eval(&run_cfg, tmp.path(), false).unwrap();
            cmd_detect(&run_cfg, tmp.path(), false).unwrap();
            cmd_report(&run_cfg, tmp.path(), false).unwrap();
            all_bytes(tmp.path())
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
            assert_eq!(pa, pb);
            assert_eq!(ba, bb, "file {} differs between reruns", pa);
        }
    });
}

fn all_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}
