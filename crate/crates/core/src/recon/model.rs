//! Reconstruction maps F: k-space -> real image, plus parameter plumbing
//! shared by the learned variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mri::coils::CoilMaps;
use crate::mri::forward::zero_fill;
use crate::mri::mask::SamplingMask;
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::{ComplexTensor, RealTensor};
use crate::recon::tv::tv_reconstruct;
use crate::recon::unet::UnetLite;
use crate::recon::varnet::VarnetLite;

/// One convolution layer's parameters.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: RealTensor,
    pub bias: RealTensor,
}

impl Conv {
    /// He-style uniform init; the bound shrinks with fan-in.
    pub fn init(c_out: usize, c_in: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let bound = (2.0 / fan_in).sqrt();
        let weight = RealTensor::new(
            vec![c_out, c_in, k, k],
            (0..c_out * c_in * k * k)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        )
        .unwrap();
        Conv {
            weight,
            bias: RealTensor::zeros(&[c_out]),
        }
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        Conv {
            weight: RealTensor::zeros(&[c_out, c_in, k, k]),
            bias: RealTensor::zeros(&[c_out]),
        }
    }
}

/// Named parameter nodes recorded on a tape during a differentiable
/// forward pass; used to pull gradients for training.
pub type ParamNodes = Vec<(String, NodeId)>;

/// A reconstruction map. `zero_fill` and the learned variants are
/// differentiable through the tape; `tv` is iterative and is rejected by
/// the differentiable path.
#[derive(Debug, Clone)]
pub enum ReconModel {
    ZeroFill,
    Tv { lambda: f64, iters: usize },
    UnetLite(UnetLite),
    VarnetLite(VarnetLite),
}

impl ReconModel {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ReconModel::ZeroFill => "zero_fill",
            ReconModel::Tv { .. } => "tv",
            ReconModel::UnetLite(_) => "unet_lite",
            ReconModel::VarnetLite(_) => "varnet_lite",
        }
    }

    /// Fast inference path.
    pub fn apply(
        &self,
        z: &ComplexTensor,
        mask: &SamplingMask,
        maps: &CoilMaps,
    ) -> Result<RealTensor> {
        let out = match self {
            ReconModel::ZeroFill => zero_fill(z)?,
            ReconModel::Tv { lambda, iters } => {
                tv_reconstruct(z, mask, maps, *lambda, *iters)?.image
            }
            ReconModel::UnetLite(m) => m.apply(z)?,
            ReconModel::VarnetLite(m) => m.apply(z, mask, maps)?,
        };
        if !out.all_finite() {
            return Err(Error::Numeric(format!(
                "{} produced non-finite output",
                self.variant_name()
            )));
        }
        Ok(out)
    }

    /// Differentiable path: record the reconstruction on `tape` starting
    /// from an existing complex node, returning the output image node and
    /// the parameter leaves.
    pub fn apply_taped(
        &self,
        tape: &mut Tape,
        z_node: NodeId,
        mask: &SamplingMask,
        maps: &CoilMaps,
    ) -> Result<(NodeId, ParamNodes)> {
        match self {
            ReconModel::ZeroFill => {
                let img = tape.ifft2c(z_node)?;
                let out = tape.rss(img)?;
                Ok((out, Vec::new()))
            }
            ReconModel::Tv { .. } => Err(Error::InvalidParam(
                "tv reconstruction is iterative and not differentiable through the tape; \
                 use zero_fill, unet_lite, or varnet_lite"
                    .into(),
            )),
            ReconModel::UnetLite(m) => m.apply_taped(tape, z_node),
            ReconModel::VarnetLite(m) => m.apply_taped(tape, z_node, mask, maps),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, ReconModel::Tv { .. })
    }

    /// Named parameter tensors, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, RealTensor)> {
        match self {
            ReconModel::UnetLite(m) => m.named_params(),
            ReconModel::VarnetLite(m) => m.named_params(),
            _ => Vec::new(),
        }
    }

    /// Overwrite parameters from (name, tensor) pairs.
    pub fn load_params(&mut self, params: &[(String, RealTensor)]) -> Result<()> {
        match self {
            ReconModel::UnetLite(m) => m.load_params(params),
            ReconModel::VarnetLite(m) => m.load_params(params),
            _ => Err(Error::InvalidParam(format!(
                "{} has no parameters",
                self.variant_name()
            ))),
        }
    }

    pub fn hyperparameters(&self) -> serde_json::Value {
        match self {
            ReconModel::ZeroFill => serde_json::json!({}),
            ReconModel::Tv { lambda, iters } => {
                serde_json::json!({"lambda": lambda, "iters": iters})
            }
            ReconModel::UnetLite(m) => serde_json::json!({
                "residual": m.residual, "height": m.height, "width": m.width
            }),
            ReconModel::VarnetLite(m) => serde_json::json!({
                "cascades": m.cascades.len(), "height": m.height, "width": m.width
            }),
        }
    }

    /// Rebuild a model from a checkpoint header and its weight tensors.
    pub fn from_checkpoint(
        variant: &str,
        hyperparameters: &serde_json::Value,
        tensors: &[(String, RealTensor)],
    ) -> Result<ReconModel> {
        let usize_field = |name: &str| -> Result<usize> {
            hyperparameters
                .get(name)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| {
                    Error::Format(format!("checkpoint missing hyperparameter {}", name))
                })
        };
        match variant {
            "zero_fill" => Ok(ReconModel::ZeroFill),
            "tv" => {
                let lambda = hyperparameters
                    .get("lambda")
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::Format("checkpoint missing lambda".into()))?;
                Ok(ReconModel::Tv {
                    lambda,
                    iters: usize_field("iters")?,
                })
            }
            "unet_lite" => {
                let residual = hyperparameters
                    .get("residual")
                    .and_then(|v| v.as_bool())
                    .ok_or_else(|| Error::Format("checkpoint missing residual".into()))?;
                let mut m = UnetLite::new(usize_field("height")?, usize_field("width")?, residual, 0)?;
                m.load_params(tensors)?;
                Ok(ReconModel::UnetLite(m))
            }
            "varnet_lite" => {
                let mut m = VarnetLite::new(
                    usize_field("height")?,
                    usize_field("width")?,
                    usize_field("cascades")?,
                    0,
                )?;
                m.load_params(tensors)?;
                Ok(ReconModel::VarnetLite(m))
            }
            other => Err(Error::Format(format!("unknown model variant {}", other))),
        }
    }
}

pub(crate) fn take_param<'a>(
    params: &'a [(String, RealTensor)],
    name: &str,
) -> Result<&'a RealTensor> {
    params
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {}", name)))
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
