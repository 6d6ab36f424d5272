//! The masked iterative signed-gradient attack and its loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::target::render_target;
use crate::attack::{AttackSpec, ClipMode, EpsilonMode};
use crate::error::{Error, Result};
use crate::mri::coils::CoilMaps;
use crate::mri::mask::SamplingMask;
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::{ComplexTensor, RealTensor};
use crate::recon::model::ReconModel;

#[derive(Debug, Clone)]
pub struct AttackResult {
    /// The perturbation of Re(z), over the full k-space grid.
    pub delta_star: RealTensor,
    pub best_loss: f64,
    /// Loss at the state evaluated in each iteration.
    pub loss_trace: Vec<f64>,
    pub perturbed_recon: RealTensor,
    pub clean_recon: RealTensor,
    /// Perturbed k-space, ready to feed back through any reconstructor.
    pub perturbed_kspace: ComplexTensor,
    pub target_image: RealTensor,
    pub target_mask: RealTensor,
    /// The target was invisible (painted intensity equals the existing
    /// pixel values), e.g. on a constant image.
    pub degenerate_target: bool,
    /// Resolved absolute budget and step after applying the epsilon mode.
    pub epsilon_abs: f64,
    pub alpha_abs: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

/// Two-term attack objective: match the target inside the region mask,
/// stay close to the clean reconstruction outside it. Each term is
/// normalized by its pixel count.
pub fn attack_loss(
    recon_pert: &RealTensor,
    recon_clean: &RealTensor,
    y_t: &RealTensor,
    m: &RealTensor,
) -> Result<f64> {
    let (m_count, out_count) = check_loss_inputs(recon_pert, recon_clean, y_t, m)?;
    let mut inside = 0.0;
    let mut outside = 0.0;
    for i in 0..m.len() {
        let d_t = recon_pert.data[i] - y_t.data[i];
        let d_c = recon_pert.data[i] - recon_clean.data[i];
        inside += m.data[i] * d_t * d_t;
        outside += (1.0 - m.data[i]) * d_c * d_c;
    }
    Ok(inside / m_count + outside / out_count)
}

fn check_loss_inputs(
    recon_pert: &RealTensor,
    recon_clean: &RealTensor,
    y_t: &RealTensor,
    m: &RealTensor,
) -> Result<(f64, f64)> {
    for t in [recon_clean, y_t, m] {
        if t.shape != recon_pert.shape {
            return Err(Error::ShapeMismatch(format!(
                "attack_loss shapes {:?} vs {:?}",
                recon_pert.shape, t.shape
            )));
        }
    }
    if m.data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParam("region mask must be binary".into()));
    }
    let m_count: f64 = m.data.iter().sum();
    let out_count = m.len() as f64 - m_count;
    if m_count == 0.0 || out_count == 0.0 {
        return Err(Error::InvalidParam(
            "region mask must be neither empty nor all-ones".into(),
        ));
    }
    Ok((m_count, out_count))
}

/// Record the attack loss on the tape; constants are the clean recon, the
/// target and the region mask.
fn attack_loss_taped(
    tape: &mut Tape,
    recon_pert: NodeId,
    recon_clean: &RealTensor,
    y_t: &RealTensor,
    m: &RealTensor,
    m_count: f64,
    out_count: f64,
) -> Result<NodeId> {
    let y_t_node = tape.leaf_real(y_t.clone());
    let d_t = tape.sub(recon_pert, y_t_node)?;
    let d_t = tape.mul_const(d_t, m)?;
    let inside = tape.sum_squares(d_t)?;
    let inside = tape.scalar_scale(inside, 1.0 / m_count)?;

    let clean_node = tape.leaf_real(recon_clean.clone());
    let inv_m = m.map(|v| 1.0 - v);
    let d_c = tape.sub(recon_pert, clean_node)?;
    let d_c = tape.mul_const(d_c, &inv_m)?;
    let outside = tape.sum_squares(d_c)?;
    let outside = tape.scalar_scale(outside, 1.0 / out_count)?;

    tape.scalar_add(inside, outside)
}

/// Masked iterative signed-gradient attack. Perturbs the real parts of
/// the stored k-space grid under an L-infinity budget, tracking the best
/// (lowest-loss) perturbation seen across iterations.
pub fn masked_iterative_fgsm(
    model: &ReconModel,
    z: &ComplexTensor,
    mask: &SamplingMask,
    maps: &CoilMaps,
    spec: &AttackSpec,
) -> Result<AttackResult> {
    spec.validate()?;
    if !model.is_differentiable() {
        return Err(Error::InvalidParam(format!(
            "{} cannot be attacked: the attack needs gradients through the \
             reconstruction and the iterative tv solver provides none",
            model.variant_name()
        )));
    }

    let clean_recon = model.apply(z, mask, maps)?;
    let render = render_target(&clean_recon, spec)?;
    let (m_count, out_count) =
        check_loss_inputs(&clean_recon, &clean_recon, &render.y_t, &render.mask)?;

    let re_z = z.real_part();
    let im_z = z.imag_part();
    let re_max = re_z.data.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let (eps, alpha) = match spec.epsilon_mode {
        EpsilonMode::Absolute => (spec.epsilon, spec.alpha),
        EpsilonMode::Relative => (spec.epsilon * re_max, spec.alpha * re_max),
    };
    let (clip_lo, clip_hi) = match spec.clip {
        ClipMode::Literal { lo, hi } => (lo, hi),
        ClipMode::DataRange => (re_z.min_value(), re_z.max_value()),
    };
    if clip_lo >= clip_hi {
        return Err(Error::InvalidParam(format!(
            "degenerate clip range [{}, {}] (constant Re(z)?)",
            clip_lo, clip_hi
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut delta = RealTensor::zeros(&re_z.shape);
    // Uniform random init. Its scale follows the step size, not the
    // budget: the budget can be orders of magnitude above what one
    // iteration can undo, and a budget-scale init would bury the sample
    // in noise the optimizer cannot remove within the iteration count.
    let init = if alpha > 0.0 { eps.min(alpha) } else { eps };
    if init > 0.0 {
        for d in delta.data.iter_mut() {
            *d = rng.gen_range(-init..init);
        }
    }

    // Loss and gradient of the current delta; the graph re-applies the
    // clip, so any delta is evaluated under the same semantics.
    let evaluate = |delta: &RealTensor, want_grad: bool| -> Result<(f64, Option<RealTensor>, RealTensor)> {
        let mut tape = Tape::new();
        let d_node = tape.leaf_real(delta.clone());
        let re_node = tape.leaf_real(re_z.clone());
        let re_adv = tape.add(re_node, d_node)?;
        let re_adv = tape.clip(re_adv, clip_lo, clip_hi)?;
        let z_adv = tape.complex_from_re(re_adv, &im_z)?;
        let (recon, _) = model.apply_taped(&mut tape, z_adv, mask, maps)?;
        let loss = attack_loss_taped(
            &mut tape,
            recon,
            &clean_recon,
            &render.y_t,
            &render.mask,
            m_count,
            out_count,
        )?;
        let lv = tape.value(loss).as_scalar()?;
        let recon_img = tape.value(recon).as_real()?.clone();
        if want_grad {
            let grads = tape.backward(loss)?;
            Ok((lv, Some(grads.real(d_node)?.clone()), recon_img))
        } else {
            Ok((lv, None, recon_img))
        }
    };

    let mut best_loss = f64::INFINITY;
    let mut best_delta = delta.clone();
    let mut loss_trace = Vec::with_capacity(spec.iters);
    for it in 0..spec.iters {
        let (loss, grad, _) = evaluate(&delta, true)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "attack loss became non-finite at iteration {} (trace: {:?})",
                it, loss_trace
            )));
        }
        loss_trace.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_delta = delta.clone();
        }
        let grad = grad.unwrap();
        // Signed step; sign(0) = 0. Stay inside the budget.
        for (d, g) in delta.data.iter_mut().zip(&grad.data) {
            let s = if *g > 0.0 {
                1.0
            } else if *g < 0.0 {
                -1.0
            } else {
                0.0
            };
            *d = (*d - alpha * s).clamp(-eps, eps);
        }
    }

    let (final_loss, _, perturbed_recon) = evaluate(&best_delta, false)?;
    if (final_loss - best_loss).abs() > 1e-12 * best_loss.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "attack state desync: best loss {} re-evaluates to {}",
            best_loss, final_loss
        )));
    }

    // Materialize the perturbed k-space exactly as evaluated.
    let mut re_adv = re_z.clone();
    for (r, d) in re_adv.data.iter_mut().zip(&best_delta.data) {
        *r = (*r + d).clamp(clip_lo, clip_hi);
    }
    let perturbed_kspace = ComplexTensor::from_parts(&re_adv, &im_z)?;

    Ok(AttackResult {
        delta_star: best_delta,
        best_loss,
        loss_trace,
        perturbed_recon,
        clean_recon,
        perturbed_kspace,
        target_image: render.y_t,
        target_mask: render.mask,
        degenerate_target: render.degenerate,
        epsilon_abs: eps,
        alpha_abs: alpha,
        clip_lo,
        clip_hi,
    })
}
