//! Cartesian column sampling masks with a fully-sampled center band.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the non-center columns are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Equispaced,
    Random,
}

/// Binary per-column k-space inclusion pattern, applied to all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub width: usize,
    /// One 0/1 entry per column.
    pub pattern: Vec<u8>,
    pub acceleration: f64,
    pub center_fraction: f64,
}

impl SamplingMask {
    pub fn sampled_count(&self) -> usize {
        self.pattern.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_sampled(&self, col: usize) -> bool {
        self.pattern[col] == 1
    }

    /// Pattern as f64 weights for elementwise multiplies.
    pub fn weights(&self) -> Vec<f64> {
        self.pattern.iter().map(|&v| v as f64).collect()
    }

    /// Index range of the fully-sampled center band.
    pub fn center_range(&self) -> std::ops::Range<usize> {
        let n_center = (self.center_fraction * self.width as f64).ceil() as usize;
        let start = (self.width - n_center) / 2;
        start..start + n_center
    }

    fn assert_invariants(&self) {
        for c in self.center_range() {
            assert_eq!(self.pattern[c], 1, "center column {} not sampled", c);
        }
    }
}

/// Build a Cartesian column mask. Deterministic for a given seed.
///
/// The fully-sampled center band has `ceil(center_fraction * width)`
/// columns; the remaining budget toward `width / acceleration` total
/// columns is placed equispaced (or uniformly at random) among the
/// outside columns.
pub fn make_mask(
    width: usize,
    acceleration: f64,
    center_fraction: f64,
    kind: MaskKind,
    seed: u64,
) -> Result<SamplingMask> {
    if acceleration < 1.0 {
        return Err(Error::InvalidParam(format!(
            "acceleration must be >= 1, got {}",
            acceleration
        )));
    }
    if center_fraction <= 0.0 || center_fraction >= 1.0 {
        return Err(Error::InvalidParam(format!(
            "center_fraction must be in (0, 1), got {}",
            center_fraction
        )));
    }
    let n_center = (center_fraction * width as f64).ceil() as usize;
    let target = (width as f64 / acceleration).round() as usize;
    if target > width {
        return Err(Error::InvalidParam(format!(
            "parameters request {} sampled columns but width is {}",
            target, width
        )));
    }
    if n_center > target + 1 {
        return Err(Error::InvalidParam(format!(
            "center band of {} columns exceeds the {}-column budget at R={}",
            n_center, target, acceleration
        )));
    }

    let mut pattern = vec![0u8; width];
    let center_start = (width - n_center) / 2;
    for c in center_start..center_start + n_center {
        pattern[c] = 1;
    }

    let outside: Vec<usize> = (0..width).filter(|&c| pattern[c] == 0).collect();
    let n_extra = target.saturating_sub(n_center);
    match kind {
        MaskKind::Equispaced => {
            if n_extra > 0 {
                let step = outside.len() as f64 / n_extra as f64;
                for i in 0..n_extra {
                    let idx = ((i as f64 + 0.5) * step).floor() as usize;
                    pattern[outside[idx.min(outside.len() - 1)]] = 1;
                }
            }
        }
        MaskKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool = outside.clone();
            pool.shuffle(&mut rng);
            for &c in pool.iter().take(n_extra) {
                pattern[c] = 1;
            }
        }
    }

    let mask = SamplingMask {
        width,
        pattern,
        acceleration,
        center_fraction,
    };
    mask.assert_invariants();
    Ok(mask)
}
