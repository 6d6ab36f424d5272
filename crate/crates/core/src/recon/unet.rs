//! A two-scale convolutional encoder/decoder applied to the zero-fill
//! image, with a skip connection — a desk-scale stand-in for the usual
//! UNet baseline.
//!
//! The zero-fill image is normalized by its maximum before the network
//! and rescaled after, so the weights see inputs of a fixed scale
//! regardless of k-space magnitude. With `residual` the network predicts
//! a correction added to the zero-fill image.

use crate::error::{Error, Result};
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::{ComplexTensor, RealTensor};
use crate::recon::model::{seeded_rng, take_param, Conv, ParamNodes};

#[derive(Debug, Clone)]
pub struct UnetLite {
    /// 1 -> 8 channels.
    pub enc1: Conv,
    /// 8 -> 16 channels at half resolution.
    pub enc2: Conv,
    /// 24 -> 8 channels after skip concatenation.
    pub dec1: Conv,
    /// 8 -> 1 channel output head.
    pub out: Conv,
    /// Predict a correction to zero-fill instead of the image directly.
    pub residual: bool,
    /// Training image size; inputs of any other size are rejected.
    pub height: usize,
    pub width: usize,
}

const C1: usize = 8;
const C2: usize = 16;
/// Floor for the max-normalizer so an all-zero zero-fill image is safe.
const NORM_FLOOR: f64 = 1e-12;

impl UnetLite {
    pub fn new(height: usize, width: usize, residual: bool, seed: u64) -> Result<Self> {
        if height < 4 || width < 4 || height % 2 != 0 || width % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "unet_lite needs even spatial dims >= 4, got {}x{}",
                height, width
            )));
        }
        let mut rng = seeded_rng(seed);
        Ok(Self {
            enc1: Conv::init(C1, 1, 3, &mut rng),
            enc2: Conv::init(C2, C1, 3, &mut rng),
            dec1: Conv::init(C1, C1 + C2, 3, &mut rng),
            // Zero output head: the initial model is exactly zero-fill in
            // residual mode, which keeps early training stable.
            out: Conv::zeros(1, C1, 3),
            residual,
            height,
            width,
        })
    }

    pub fn apply(&self, z: &ComplexTensor) -> Result<RealTensor> {
        let mut tape = Tape::new();
        let zn = tape.leaf_complex(z.clone());
        let (out, _) = self.apply_taped(&mut tape, zn)?;
        Ok(tape.value(out).as_real()?.clone())
    }

    pub fn apply_taped(&self, tape: &mut Tape, z_node: NodeId) -> Result<(NodeId, ParamNodes)> {
        let (h, w) = tape.value(z_node).as_complex()?.hw()?;
        if (h, w) != (self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "unet_lite trained at {}x{}, input is {}x{}",
                self.height, self.width, h, w
            )));
        }
        // Zero-fill front end.
        let img = tape.ifft2c(z_node)?;
        let zf = tape.rss(img)?;
        // Normalize to unit max.
        let mx = tape.reduce_max(zf)?;
        let mx = tape.scalar_max(mx, NORM_FLOOR)?;
        let x = tape.div_by_scalar(zf, mx)?;
        let x = tape.reshape(x, &[1, h, w])?;

        let p = self.param_nodes(tape);
        let e1 = tape.conv2d(x, p[0].1, p[1].1)?;
        let e1 = tape.relu(e1)?;
        let down = tape.avg_pool2(e1)?;
        let e2 = tape.conv2d(down, p[2].1, p[3].1)?;
        let e2 = tape.relu(e2)?;
        let up = tape.upsample2(e2)?;
        let cat = tape.concat_channels(e1, up)?;
        let d1 = tape.conv2d(cat, p[4].1, p[5].1)?;
        let d1 = tape.relu(d1)?;
        let y = tape.conv2d(d1, p[6].1, p[7].1)?;
        let y = tape.reshape(y, &[h, w])?;

        let y = if self.residual {
            let x2 = tape.reshape(x, &[h, w])?;
            tape.add(y, x2)?
        } else {
            y
        };
        let out = tape.mul_by_scalar(y, mx)?;
        Ok((out, p))
    }

    fn param_nodes(&self, tape: &mut Tape) -> ParamNodes {
        let mut nodes = Vec::new();
        for (name, t) in self.named_params() {
            let id = tape.leaf_real(t);
            nodes.push((name, id));
        }
        nodes
    }

    pub fn named_params(&self) -> Vec<(String, RealTensor)> {
        vec![
            ("enc1.weight".into(), self.enc1.weight.clone()),
            ("enc1.bias".into(), self.enc1.bias.clone()),
            ("enc2.weight".into(), self.enc2.weight.clone()),
            ("enc2.bias".into(), self.enc2.bias.clone()),
            ("dec1.weight".into(), self.dec1.weight.clone()),
            ("dec1.bias".into(), self.dec1.bias.clone()),
            ("out.weight".into(), self.out.weight.clone()),
            ("out.bias".into(), self.out.bias.clone()),
        ]
    }

    pub fn load_params(&mut self, params: &[(String, RealTensor)]) -> Result<()> {
        for (slot, name) in [
            (&mut self.enc1.weight, "enc1.weight"),
            (&mut self.enc1.bias, "enc1.bias"),
            (&mut self.enc2.weight, "enc2.weight"),
            (&mut self.enc2.bias, "enc2.bias"),
            (&mut self.dec1.weight, "dec1.weight"),
            (&mut self.dec1.bias, "dec1.bias"),
            (&mut self.out.weight, "out.weight"),
            (&mut self.out.bias, "out.bias"),
        ] {
            let t = take_param(params, name)?;
            if t.shape != slot.shape {
                return Err(Error::ShapeMismatch(format!(
                    "{}: {:?} vs {:?}",
                    name, t.shape, slot.shape
                )));
            }
            *slot = t.clone();
        }
        Ok(())
    }
}
