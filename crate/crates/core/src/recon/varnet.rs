//! Unrolled variational reconstruction: a short cascade of data-consistency
//! steps interleaved with a small image-space CNN refinement, mirroring the
//! structure of end-to-end variational networks at desk scale.
//!
//! Each cascade updates the running k-space estimate
//!
//! `z_{k+1} = z_k - eta_k * mask . (z_k - z_obs)
//!            + fft2c(maps . cnn_k(rss(ifft2c(z_k))))`
//!
//! with a learned scalar `eta_k` and the final image read out by the
//! zero-fill combine of `z_K`.

use crate::error::{Error, Result};
use crate::mri::coils::CoilMaps;
use crate::mri::mask::SamplingMask;
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::{ComplexTensor, RealTensor};
use crate::recon::model::{seeded_rng, take_param, Conv, ParamNodes};

#[derive(Debug, Clone)]
pub struct Cascade {
    /// Learned data-consistency weight, stored as a length-1 tensor so it
    /// shares the checkpoint format with the convolutions.
    pub eta: RealTensor,
    /// 1 -> 8 channels.
    pub conv1: Conv,
    /// 8 -> 1 channel refinement output.
    pub conv2: Conv,
}

#[derive(Debug, Clone)]
pub struct VarnetLite {
    pub cascades: Vec<Cascade>,
    pub height: usize,
    pub width: usize,
}

const HIDDEN: usize = 8;

impl VarnetLite {
    pub fn new(height: usize, width: usize, n_cascades: usize, seed: u64) -> Result<Self> {
        if n_cascades < 1 {
            return Err(Error::InvalidParam("varnet_lite needs >= 1 cascade".into()));
        }
        let mut rng = seeded_rng(seed);
        let cascades = (0..n_cascades)
            .map(|_| Cascade {
                eta: RealTensor::new(vec![1], vec![1.0]).unwrap(),
                conv1: Conv::init(HIDDEN, 1, 3, &mut rng),
                // Zero refinement head: the initial model is pure data
                // consistency, i.e. zero-fill of the observations.
                conv2: Conv::zeros(1, HIDDEN, 3),
            })
            .collect();
        Ok(Self {
            cascades,
            height,
            width,
        })
    }

    pub fn apply(
        &self,
        z: &ComplexTensor,
        mask: &SamplingMask,
        maps: &CoilMaps,
    ) -> Result<RealTensor> {
        let mut tape = Tape::new();
        let zn = tape.leaf_complex(z.clone());
        let (out, _) = self.apply_taped(&mut tape, zn, mask, maps)?;
        Ok(tape.value(out).as_real()?.clone())
    }

    pub fn apply_taped(
        &self,
        tape: &mut Tape,
        z_node: NodeId,
        mask: &SamplingMask,
        maps: &CoilMaps,
    ) -> Result<(NodeId, ParamNodes)> {
        let (h, w) = tape.value(z_node).as_complex()?.hw()?;
        if (h, w) != (self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "varnet_lite trained at {}x{}, input is {}x{}",
                self.height, self.width, h, w
            )));
        }
        if mask.width != w || maps.hw() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "mask width {} / maps {:?} vs k-space {}x{}",
                mask.width,
                maps.maps.shape,
                h,
                w
            )));
        }
        let pattern = mask.weights();
        let mut params = Vec::new();
        let mut zk = z_node;
        for (k, cas) in self.cascades.iter().enumerate() {
            let eta = tape.leaf_real(cas.eta.clone());
            let w1 = tape.leaf_real(cas.conv1.weight.clone());
            let b1 = tape.leaf_real(cas.conv1.bias.clone());
            let w2 = tape.leaf_real(cas.conv2.weight.clone());
            let b2 = tape.leaf_real(cas.conv2.bias.clone());
            params.push((format!("cascade{}.eta", k), eta));
            params.push((format!("cascade{}.conv1.weight", k), w1));
            params.push((format!("cascade{}.conv1.bias", k), b1));
            params.push((format!("cascade{}.conv2.weight", k), w2));
            params.push((format!("cascade{}.conv2.bias", k), b2));

            // Data consistency: zk - eta * mask . (zk - z_obs).
            let diff = tape.sub_complex(zk, z_node)?;
            let masked = tape.mask_columns(diff, &pattern)?;
            let eta_s = tape.tensor_to_scalar(eta)?;
            let dc = tape.scale_complex_by_scalar(masked, eta_s)?;

            // Refinement: CNN on the combined image, re-projected to
            // k-space through the coil maps.
            let img = tape.ifft2c(zk)?;
            let combined = tape.rss(img)?;
            let x = tape.reshape(combined, &[1, h, w])?;
            let c1 = tape.conv2d(x, w1, b1)?;
            let c1 = tape.relu(c1)?;
            let c2 = tape.conv2d(c1, w2, b2)?;
            let refined = tape.reshape(c2, &[h, w])?;
            let coil_imgs = tape.map_times_real(refined, &maps.maps)?;
            let refine_k = tape.fft2c(coil_imgs)?;

            let step = tape.sub_complex(zk, dc)?;
            zk = tape.add_complex(step, refine_k)?;
        }
        let img = tape.ifft2c(zk)?;
        let out = tape.rss(img)?;
        Ok((out, params))
    }

    pub fn named_params(&self) -> Vec<(String, RealTensor)> {
        let mut out = Vec::new();
        for (k, cas) in self.cascades.iter().enumerate() {
            out.push((format!("cascade{}.eta", k), cas.eta.clone()));
            out.push((format!("cascade{}.conv1.weight", k), cas.conv1.weight.clone()));
            out.push((format!("cascade{}.conv1.bias", k), cas.conv1.bias.clone()));
            out.push((format!("cascade{}.conv2.weight", k), cas.conv2.weight.clone()));
            out.push((format!("cascade{}.conv2.bias", k), cas.conv2.bias.clone()));
        }
        out
    }

    pub fn load_params(&mut self, params: &[(String, RealTensor)]) -> Result<()> {
        for k in 0..self.cascades.len() {
            let cas = &mut self.cascades[k];
            for (slot, name) in [
                (&mut cas.eta, format!("cascade{}.eta", k)),
                (&mut cas.conv1.weight, format!("cascade{}.conv1.weight", k)),
                (&mut cas.conv1.bias, format!("cascade{}.conv1.bias", k)),
                (&mut cas.conv2.weight, format!("cascade{}.conv2.weight", k)),
                (&mut cas.conv2.bias, format!("cascade{}.conv2.bias", k)),
            ] {
                let t = take_param(params, &name)?;
                if t.shape != slot.shape {
                    return Err(Error::ShapeMismatch(format!(
                        "{}: {:?} vs {:?}",
                        name, t.shape, slot.shape
                    )));
                }
                *slot = t.clone();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::forward::{forward_model, zero_fill};
    use crate::mri::mask::{make_mask, MaskKind};
    use crate::mri::phantom::gen_phantom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_setup(h: usize, w: usize, seed: u64) -> (ComplexTensor, SamplingMask, CoilMaps) {
        noisy_setup(h, w, seed, 0.0)
    }

    fn noisy_setup(
        h: usize,
        w: usize,
        seed: u64,
        sigma: f64,
    ) -> (ComplexTensor, SamplingMask, CoilMaps) {
        let x = gen_phantom(h, w, 4, seed).unwrap();
        let maps = CoilMaps::identity(h, w);
        let mask = make_mask(w, 2.0, 0.25, MaskKind::Equispaced, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = forward_model(&x, &maps, &mask, sigma, &mut rng).unwrap();
        (z, mask, maps)
    }

    fn with_weights(mut m: VarnetLite, eta: f64, zero_cnn: bool) -> VarnetLite {
        for cas in &mut m.cascades {
            cas.eta.data[0] = eta;
            if zero_cnn {
                cas.conv1 = Conv::zeros(HIDDEN, 1, 3);
                cas.conv2 = Conv::zeros(1, HIDDEN, 3);
            }
        }
        m
    }

    #[test]
    fn zero_cnn_zero_eta_is_zero_fill() {
        let (z, mask, maps) = test_setup(8, 8, 1);
        let m = with_weights(VarnetLite::new(8, 8, 4, 0).unwrap(), 0.0, true);
        let out = m.apply(&z, &mask, &maps).unwrap();
        let zf = zero_fill(&z).unwrap();
        for (a, b) in out.data.iter().zip(&zf.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_cnn_unit_eta_is_zero_fill_of_observations() {
        // With eta = 1 the data-consistency step rewrites sampled entries
        // with the observations each cascade; starting from z_obs that is
        // a fixed point, so the output is zero_fill(z_obs).
        let (z, mask, maps) = test_setup(8, 8, 2);
        let m = with_weights(VarnetLite::new(8, 8, 4, 0).unwrap(), 1.0, true);
        let out = m.apply(&z, &mask, &maps).unwrap();
        let zf = zero_fill(&z).unwrap();
        for (a, b) in out.data.iter().zip(&zf.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let (_, mask, maps) = test_setup(8, 8, 3);
        let (z16, _, _) = test_setup(16, 16, 3);
        let m = VarnetLite::new(8, 8, 2, 0).unwrap();
        assert!(m.apply(&z16, &mask, &maps).is_err());
    }

    #[test]
    fn taped_gradient_matches_finite_differences() {
        // Noisy k-space keeps the combined magnitude away from its
        // non-differentiable zero, where finite differences break down.
        let (z0, mask, maps) = noisy_setup(8, 8, 5, 0.05);
        let mut m = VarnetLite::new(8, 8, 2, 5).unwrap();
        // Randomize the refinement heads so the CNN branch carries
        // gradient too (they are zero-initialized).
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for cas in &mut m.cascades {
            cas.conv2 = Conv::init(1, HIDDEN, 3, &mut rng);
            cas.eta.data[0] = 0.7;
        }
        let im = z0.imag_part();

        let run = |re: &RealTensor, want_grad: bool| -> (f64, Option<RealTensor>) {
            let mut tape = Tape::new();
            let re_node = tape.leaf_real(re.clone());
            let zn = tape.complex_from_re(re_node, &im).unwrap();
            let (out, _) = m.apply_taped(&mut tape, zn, &mask, &maps).unwrap();
            let loss = tape.sum_squares(out).unwrap();
            let lv = tape.value(loss).as_scalar().unwrap();
            if want_grad {
                let g = tape.backward(loss).unwrap();
                (lv, Some(g.real(re_node).unwrap().clone()))
            } else {
                (lv, None)
            }
        };
        let re0 = z0.real_part();
        let (_, g) = run(&re0, true);
        let g = g.unwrap();
        let mut worst = 0.0_f64;
        for i in (0..re0.len()).step_by(7) {
            // Shrinking steps: a relu kink inside the stencil spoils a
            // single step size but not all of them.
            let mut best = f64::INFINITY;
            for h in [1e-4, 1e-5, 1e-6] {
                let mut p = re0.clone();
                p.data[i] += h;
                let mut q = re0.clone();
                q.data[i] -= h;
                let fd = (run(&p, false).0 - run(&q, false).0) / (2.0 * h);
                let denom = g.data[i].abs().max(fd.abs()).max(1e-6);
                best = best.min((g.data[i] - fd).abs() / denom);
            }
            worst = worst.max(best);
        }
        assert!(worst < 1e-4, "worst rel err {}", worst);
    }

    #[test]
    fn apply_and_taped_agree() {
        let (z, mask, maps) = test_setup(8, 8, 7);
        let m = VarnetLite::new(8, 8, 3, 7).unwrap();
        let fast = m.apply(&z, &mask, &maps).unwrap();
        let mut tape = Tape::new();
        let zn = tape.leaf_complex(z.clone());
        let (out, _) = m.apply_taped(&mut tape, zn, &mask, &maps).unwrap();
        let taped = tape.value(out).as_real().unwrap();
        for (a, b) in fast.data.iter().zip(&taped.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
