//! SGD trainer for the learned reconstruction models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mri::coils::CoilMaps;
use crate::mri::Sample;
use crate::numerics::tape::Tape;
use crate::numerics::tensor::RealTensor;
use crate::recon::model::ReconModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L2,
    L1,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            learning_rate: 0.05,
            loss: LossKind::L2,
            seed: 0,
        }
    }
}

const MOMENTUM: f64 = 0.9;

/// One training example: an acquired sample plus the coil maps it was
/// simulated with (the dataset container does not store maps).
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub sample: Sample,
    pub maps: CoilMaps,
}

/// Train `model` in place with SGD + momentum on the mean per-pixel loss
/// between F(z) and the ground truth. Returns the per-epoch mean loss.
/// Deterministic for a given config and dataset.
pub fn train(
    model: &mut ReconModel,
    examples: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::InvalidParam("training set is empty".into()));
    }
    if cfg.epochs < 1 {
        return Err(Error::InvalidParam("epochs must be >= 1".into()));
    }
    if cfg.batch_size < 1 {
        return Err(Error::InvalidParam("batch_size must be >= 1".into()));
    }
    if cfg.learning_rate < 0.0 {
        return Err(Error::InvalidParam(format!(
            "learning_rate must be >= 0, got {}",
            cfg.learning_rate
        )));
    }
    if !model.is_differentiable() {
        return Err(Error::InvalidParam(format!(
            "{} is not trainable",
            model.variant_name()
        )));
    }

    let mut params = model.named_params();
    if params.is_empty() {
        return Err(Error::InvalidParam(format!(
            "{} has no parameters to train",
            model.variant_name()
        )));
    }
    let mut velocity: Vec<RealTensor> =
        params.iter().map(|(_, t)| RealTensor::zeros(&t.shape)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<RealTensor> =
                params.iter().map(|(_, t)| RealTensor::zeros(&t.shape)).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &examples[i];
                let (loss, sample_grads) = loss_and_grads(model, ex, cfg.loss)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "training diverged: loss {} at epoch {} sample {}",
                        loss, epoch, ex.sample.id
                    )));
                }
                batch_loss += loss;
                for (g, sg) in grads.iter_mut().zip(&sample_grads) {
                    for (a, b) in g.data.iter_mut().zip(&sg.data) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for ((v, g), (_, p)) in velocity.iter_mut().zip(&grads).zip(params.iter_mut()) {
                for ((vv, gv), pv) in
                    v.data.iter_mut().zip(&g.data).zip(p.data.iter_mut())
                {
                    *vv = MOMENTUM * *vv - cfg.learning_rate * gv * scale;
                    *pv += *vv;
                }
            }
            model.load_params(&params)?;
            epoch_loss += batch_loss * scale;
            n_batches += 1;
        }
        trace.push(epoch_loss / n_batches as f64);
    }
    Ok(trace)
}

/// Mean per-pixel loss between F(z) and the ground truth, plus gradients
/// with respect to every model parameter (ordered like `named_params`).
fn loss_and_grads(
    model: &ReconModel,
    ex: &TrainExample,
    loss_kind: LossKind,
) -> Result<(f64, Vec<RealTensor>)> {
    let mut tape = Tape::new();
    let zn = tape.leaf_complex(ex.sample.kspace.clone());
    let (out, param_nodes) = model.apply_taped(&mut tape, zn, &ex.sample.mask, &ex.maps)?;
    let target = tape.leaf_real(ex.sample.ground_truth.clone());
    let diff = tape.sub(out, target)?;
    let total = match loss_kind {
        LossKind::L2 => tape.sum_squares(diff)?,
        LossKind::L1 => {
            let a = tape.abs(diff)?;
            tape.sum(a)?
        }
    };
    let n = ex.sample.ground_truth.len() as f64;
    let loss = tape.scalar_scale(total, 1.0 / n)?;
    let lv = tape.value(loss).as_scalar()?;
    let grads = tape.backward(loss)?;
    let mut out_grads = Vec::with_capacity(param_nodes.len());
    for (_, node) in &param_nodes {
        match grads.get(*node) {
            Some(v) => out_grads.push(v.as_real()?.clone()),
            // Parameter unreachable from the loss (e.g. a zeroed branch):
            // zero gradient.
            None => out_grads.push(RealTensor::zeros(
                &tape.value(*node).as_real()?.shape,
            )),
        }
    }
    Ok((lv, out_grads))
}
