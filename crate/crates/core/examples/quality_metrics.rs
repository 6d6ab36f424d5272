//! The three image-quality metrics (PSNR, NRMSE, SSIM) on simple pairs.
//!
//! Run with: `cargo run --example quality_metrics`

use advmri::metrics::{nrmse, pair_metrics, psnr, ssim};
use advmri::mri::phantom::gen_phantom;
use advmri::numerics::tensor::RealTensor;
use advmri::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let a = gen_phantom(32, 32, 5, 1)?;

    // Identical images: psnr is flagged infinite, nrmse 0, ssim 1.
    let same = pair_metrics(&a, &a)?;
    println!(
        "identical: psnr infinite = {}, nrmse = {}, ssim = {}",
        same.psnr.infinite, same.nrmse, same.ssim
    );

    // Increasing noise degrades every metric monotonically.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for sigma in [0.01, 0.05, 0.1] {
        let noisy = RealTensor::new(
            a.shape.clone(),
            a.data
                .iter()
                .map(|v| v + sigma * rng.gen_range(-1.0..1.0))
                .collect(),
        )?;
        println!(
            "sigma {:.2}: psnr {:.2} dB, nrmse {:.4}, ssim {:.4}",
            sigma,
            psnr(&a, &noisy)?.get(),
            nrmse(&a, &noisy)?,
            ssim(&a, &noisy)?
        );
    }
    Ok(())
}
