//! The undersampled measurement process and its zero-fill inverse.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mri::coils::CoilMaps;
use crate::mri::mask::SamplingMask;
use crate::numerics::fft::{fft2c, ifft2c};
use crate::numerics::ops::rss_combine;
use crate::numerics::tensor::{ComplexTensor, RealTensor};

/// `y = mask . fft2c(maps . x) + e`, with complex Gaussian noise of
/// per-component standard deviation `noise_sigma` applied to sampled
/// entries only; unsampled entries are exactly zero.
pub fn forward_model(
    x: &RealTensor,
    maps: &CoilMaps,
    mask: &SamplingMask,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<ComplexTensor> {
    if noise_sigma < 0.0 {
        return Err(Error::InvalidParam(format!(
            "noise_sigma must be >= 0, got {}",
            noise_sigma
        )));
    }
    let (h, w) = x.hw()?;
    if maps.hw() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "coil maps {:?} vs image {}x{}",
            maps.maps.shape, h, w
        )));
    }
    if mask.width != w {
        return Err(Error::ShapeMismatch(format!(
            "mask width {} vs image width {}",
            mask.width, w
        )));
    }
    let coils = maps.n_coils();
    let n = h * w;
    let mut weighted = ComplexTensor::zeros(&[coils, h, w]);
    for c in 0..coils {
        for p in 0..n {
            weighted.data[c * n + p] = maps.maps.data[c * n + p] * x.data[p];
        }
    }
    let mut y = fft2c(&weighted)?;
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    for c in 0..coils {
        for r in 0..h {
            for col in 0..w {
                let i = c * n + r * w + col;
                if mask.is_sampled(col) {
                    if noise_sigma > 0.0 {
                        let er = noise_sigma * normal.sample(rng);
                        let ei = noise_sigma * normal.sample(rng);
                        y.data[i] += Complex64::new(er, ei);
                    }
                } else {
                    y.data[i] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
    Ok(y)
}

/// Zero-fill reconstruction: per-coil inverse FFT, then root-sum-of-squares
/// across coils (magnitude for a single coil).
pub fn zero_fill(z: &ComplexTensor) -> Result<RealTensor> {
    rss_combine(&ifft2c(z)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::coils::make_coil_maps;
    use crate::mri::mask::{make_mask, MaskKind};
    use crate::mri::phantom::gen_phantom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_mask_single_coil_is_plain_fft() {
        let x = gen_phantom(8, 8, 2, 1).unwrap();
        let maps = CoilMaps::identity(8, 8);
        let mask = make_mask(8, 1.0, 0.25, MaskKind::Equispaced, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = forward_model(&x, &maps, &mask, 0.0, &mut rng).unwrap();
        let direct = fft2c(&ComplexTensor::from_real(&x)).unwrap();
        for (a, b) in y.data.iter().zip(&direct.data) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_image_zero_kspace() {
        let x = RealTensor::zeros(&[8, 8]);
        let maps = CoilMaps::identity(8, 8);
        let mask = make_mask(8, 2.0, 0.25, MaskKind::Equispaced, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = forward_model(&x, &maps, &mask, 0.0, &mut rng).unwrap();
        assert!(y.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn masked_columns_match_full_dft_and_rest_zero() {
        let x = gen_phantom(8, 8, 3, 2).unwrap();
        let maps = make_coil_maps(8, 8, 2, 3).unwrap();
        let mask = make_mask(8, 2.0, 0.25, MaskKind::Equispaced, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = forward_model(&x, &maps, &mask, 0.0, &mut rng).unwrap();

        let n = 64;
        let mut weighted = ComplexTensor::zeros(&[2, 8, 8]);
        for c in 0..2 {
            for p in 0..n {
                weighted.data[c * n + p] = maps.maps.data[c * n + p] * x.data[p];
            }
        }
        let full = fft2c(&weighted).unwrap();
        for c in 0..2 {
            for r in 0..8 {
                for col in 0..8 {
                    let i = c * n + r * 8 + col;
                    if mask.is_sampled(col) {
                        assert!((y.data[i] - full.data[i]).norm() < 1e-12);
                    } else {
                        assert_eq!(y.data[i].norm(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_fill_inverts_fully_sampled_single_coil() {
        let x = gen_phantom(16, 16, 4, 9).unwrap();
        let maps = CoilMaps::identity(16, 16);
        let mask = make_mask(16, 1.0, 0.25, MaskKind::Equispaced, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = forward_model(&x, &maps, &mask, 0.0, &mut rng).unwrap();
        let rec = zero_fill(&y).unwrap();
        for (a, b) in rec.data.iter().zip(&x.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_fill_zero_input() {
        let z = ComplexTensor::zeros(&[2, 8, 8]);
        let img = zero_fill(&z).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn per_coil_ifft_stage_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| {
            ComplexTensor::new(
                vec![2, 8, 8],
                (0..128)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect(),
            )
            .unwrap()
        };
        let z = mk(&mut rng);
        let d = mk(&mut rng);
        let sum = ComplexTensor::new(
            vec![2, 8, 8],
            z.data.iter().zip(&d.data).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let lhs = ifft2c(&sum).unwrap();
        let iz = ifft2c(&z).unwrap();
        let id = ifft2c(&d).unwrap();
        for i in 0..128 {
            assert!((lhs.data[i] - (iz.data[i] + id.data[i])).norm() < 1e-10);
        }
    }

    #[test]
    fn noise_statistics_match_sigma() {
        let x = gen_phantom(32, 32, 3, 1).unwrap();
        let maps = CoilMaps::identity(32, 32);
        let mask = make_mask(32, 1.0, 0.25, MaskKind::Equispaced, 0).unwrap();
        let sigma = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let clean = {
            let mut r2 = ChaCha8Rng::seed_from_u64(0);
            forward_model(&x, &maps, &mask, 0.0, &mut r2).unwrap()
        };
        // Pool residuals over repeated draws to pass 10^4 sampled entries.
        let mut residuals = Vec::new();
        for _ in 0..10 {
            let noisy = forward_model(&x, &maps, &mask, sigma, &mut rng).unwrap();
            for (a, b) in noisy.data.iter().zip(&clean.data) {
                residuals.push(a.re - b.re);
                residuals.push(a.im - b.im);
            }
        }
        assert!(residuals.len() >= 10_000);
        let var =
            residuals.iter().map(|v| v * v).sum::<f64>() / residuals.len() as f64;
        let std = var.sqrt();
        assert!((std - sigma).abs() / sigma < 0.05, "std {} vs {}", std, sigma);
    }

    #[test]
    fn negative_sigma_rejected() {
        let x = RealTensor::zeros(&[8, 8]);
        let maps = CoilMaps::identity(8, 8);
        let mask = make_mask(8, 1.0, 0.25, MaskKind::Equispaced, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward_model(&x, &maps, &mask, -0.1, &mut rng).is_err());
    }
}
