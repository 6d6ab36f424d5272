//! Synthetic smooth coil sensitivity maps, normalized so the
//! root-sum-of-squares equals one at every pixel.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::ComplexTensor;

/// Per-coil complex spatial weightings, `maps` shaped `[coils, h, w]`.
#[derive(Debug, Clone)]
pub struct CoilMaps {
    pub maps: ComplexTensor,
    pub smoothness: f64,
}

impl CoilMaps {
    pub fn n_coils(&self) -> usize {
        self.maps.shape[0]
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.maps.shape[1], self.maps.shape[2])
    }

    /// All-ones single-coil maps (the identity acquisition).
    pub fn identity(h: usize, w: usize) -> Self {
        Self {
            maps: ComplexTensor::new(vec![1, h, w], vec![Complex64::new(1.0, 0.0); h * w])
                .unwrap(),
            smoothness: 0.0,
        }
    }
}

/// Smooth complex Gaussian-bump profiles per coil, one bump centered
/// outside each image edge, RSS-normalized per pixel. Deterministic per
/// seed. A single coil normalizes to the constant map 1.
pub fn make_coil_maps(h: usize, w: usize, n_coils: usize, seed: u64) -> Result<CoilMaps> {
    if n_coils < 1 {
        return Err(Error::InvalidParam("n_coils must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smoothness = 0.8;
    let mut maps = ComplexTensor::zeros(&[n_coils, h, w]);
    let n = h * w;
    for c in 0..n_coils {
        // Coil centers ring around the field of view.
        let ang = 2.0 * std::f64::consts::PI * c as f64 / n_coils as f64
            + rng.gen_range(-0.2..0.2);
        let cx = 0.5 + 0.7 * ang.cos();
        let cy = 0.5 + 0.7 * ang.sin();
        let sigma = smoothness * rng.gen_range(0.8..1.2);
        let phase0: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        for r in 0..h {
            for col in 0..w {
                let dx = col as f64 / w as f64 - cx;
                let dy = r as f64 / h as f64 - cy;
                let d2 = dx * dx + dy * dy;
                let amp = (-d2 / (2.0 * sigma * sigma)).exp();
                // Slowly varying phase across the image.
                let phase = phase0 + 0.5 * (dx + dy);
                maps.data[c * n + r * w + col] =
                    Complex64::new(amp * phase.cos(), amp * phase.sin());
            }
        }
    }
    // Normalize so RSS = 1 at every pixel.
    for p in 0..n {
        let rss: f64 = (0..n_coils)
            .map(|c| maps.data[c * n + p].norm_sqr())
            .sum::<f64>()
            .sqrt();
        for c in 0..n_coils {
            maps.data[c * n + p] /= rss;
        }
    }
    Ok(CoilMaps { maps, smoothness })
}
