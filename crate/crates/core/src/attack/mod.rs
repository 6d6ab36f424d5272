//! Adversarial target construction and the masked iterative signed-gradient
//! attack on learned reconstruction maps.
//!
//! The attack perturbs only the real components of the stored k-space
//! grid, under an L-infinity budget, and minimizes a two-term image
//! objective: match an artificial target detail inside a region mask while
//! leaving the reconstruction unchanged outside it.

pub mod fgsm;
pub mod target;

pub use fgsm::{attack_loss, masked_iterative_fgsm, AttackResult};
pub use target::{render_target, TargetRender};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the scalar budget is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    /// Budget is a fraction of max|Re(z)| of the attacked sample.
    Relative,
    /// Budget is used as-is.
    Absolute,
}

/// Clip bounds applied to Re(z) + delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Per-sample (min, max) of Re(z). K-space real parts are signed, so
    /// this is the default; fixed unit bounds would zero out negative
    /// frequencies.
    DataRange,
    /// Explicit bounds, e.g. (0, 1).
    Literal { lo: f64, hi: f64 },
}

/// Geometry of the artificial detail drawn into the target image. All
/// shapes are centered in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetShape {
    /// Horizontal bar, `length` pixels wide and `width` pixels tall.
    Line { length: usize, width: usize },
    Rectangle { height: usize, width: usize },
    Ellipse { rx: usize, ry: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub epsilon: f64,
    pub epsilon_mode: EpsilonMode,
    /// Step size, in the same units (relative or absolute) as `epsilon`.
    pub alpha: f64,
    pub iters: usize,
    pub clip: ClipMode,
    pub target: TargetShape,
    pub mask_dilation: usize,
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            epsilon_mode: EpsilonMode::Relative,
            alpha: 1e-3,
            iters: 150,
            clip: ClipMode::DataRange,
            target: TargetShape::Line {
                length: 11,
                width: 2,
            },
            mask_dilation: 2,
            seed: 0,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || self.alpha < 0.0 {
            return Err(Error::InvalidParam(format!(
                "epsilon and alpha must be >= 0, got {} / {}",
                self.epsilon, self.alpha
            )));
        }
        if self.alpha > self.epsilon {
            return Err(Error::InvalidParam(format!(
                "alpha {} exceeds epsilon {}",
                self.alpha, self.epsilon
            )));
        }
        if self.iters < 1 {
            return Err(Error::InvalidParam("iters must be >= 1".into()));
        }
        if let ClipMode::Literal { lo, hi } = self.clip {
            if lo >= hi {
                return Err(Error::InvalidParam(format!(
                    "clip_lo {} must be below clip_hi {}",
                    lo, hi
                )));
            }
        }
        Ok(())
    }
}
