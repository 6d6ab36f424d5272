//! The undersampled-MRI measurement process: sampling masks, synthetic
//! phantoms and coil maps, the forward model, and zero-fill.

pub mod coils;
pub mod forward;
pub mod mask;
pub mod phantom;

pub use coils::{make_coil_maps, CoilMaps};
pub use forward::{forward_model, zero_fill};
pub use mask::{make_mask, MaskKind, SamplingMask};
pub use phantom::{gen_phantom, gen_phantom_with_bar};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::tensor::{ComplexTensor, RealTensor};

/// One acquired sample: undersampled k-space, its mask, and the ground
/// truth image it came from.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub kspace: ComplexTensor,
    pub mask: SamplingMask,
    pub ground_truth: RealTensor,
    pub noise_sigma: f64,
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub height: usize,
    pub width: usize,
    pub n_coils: usize,
    pub n_ellipses: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub mask_kind: MaskKind,
    pub noise_sigma: f64,
    /// Probability that a phantom carries the bright centered bar (see
    /// [`gen_phantom_with_bar`]). Default 0: plain ellipse phantoms.
    #[serde(default)]
    pub bar_prob: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 50,
            height: 32,
            width: 32,
            n_coils: 1,
            n_ellipses: 5,
            acceleration: 4.0,
            center_fraction: 0.08,
            mask_kind: MaskKind::Equispaced,
            noise_sigma: 0.0,
            bar_prob: 0.0,
        }
    }
}

/// Per-sample seed derived from the root seed; keeps generation
/// order-independent so samples can be produced in parallel.
pub fn sample_seed(root_seed: u64, index: usize) -> u64 {
    root_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
}

/// Generate one sample of the dataset, deterministically.
pub fn gen_sample(cfg: &DatasetConfig, root_seed: u64, index: usize) -> Result<Sample> {
    let seed = sample_seed(root_seed, index);
    let phantom = gen_phantom_with_bar(cfg.height, cfg.width, cfg.n_ellipses, cfg.bar_prob, seed)?;
    let maps = make_coil_maps(cfg.height, cfg.width, cfg.n_coils, seed ^ 0x5a5a)?;
    let mask = make_mask(
        cfg.width,
        cfg.acceleration,
        cfg.center_fraction,
        cfg.mask_kind,
        seed ^ 0xa5a5,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3c3c);
    let kspace = forward_model(&phantom, &maps, &mask, cfg.noise_sigma, &mut rng)?;
    Ok(Sample {
        id: format!("sample_{:04}", index),
        kspace,
        mask,
        ground_truth: phantom,
        noise_sigma: cfg.noise_sigma,
    })
}

/// Coil maps belonging to a generated sample (same derivation as
/// [`gen_sample`]); reconstructors that need sensitivities use this.
pub fn sample_coil_maps(cfg: &DatasetConfig, root_seed: u64, index: usize) -> Result<CoilMaps> {
    let seed = sample_seed(root_seed, index);
    make_coil_maps(cfg.height, cfg.width, cfg.n_coils, seed ^ 0x5a5a)
}
