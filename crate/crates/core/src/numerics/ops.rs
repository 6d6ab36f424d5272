//! Pure tensor kernels shared by the inference paths and the tape.
//!
//! The taped operations call these same functions so that the
//! differentiable and fast inference paths of a model agree bit for bit.

use crate::error::{Error, Result};
use crate::numerics::tensor::{ComplexTensor, RealTensor};

pub fn relu(x: &RealTensor) -> RealTensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn clip(x: &RealTensor, lo: f64, hi: f64) -> RealTensor {
    x.map(|v| v.clamp(lo, hi))
}

/// 2x2 average pooling, stride 2, per channel. Spatial dims must be even.
pub fn avg_pool2(x: &RealTensor) -> Result<RealTensor> {
    if x.shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "avg_pool2 expects [c, h, w], got {:?}",
            x.shape
        )));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "avg_pool2 needs even spatial dims, got {}x{}",
            h, w
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = RealTensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for r in 0..oh {
            for cc in 0..ow {
                let base = ch * h * w;
                let s = x.data[base + 2 * r * w + 2 * cc]
                    + x.data[base + 2 * r * w + 2 * cc + 1]
                    + x.data[base + (2 * r + 1) * w + 2 * cc]
                    + x.data[base + (2 * r + 1) * w + 2 * cc + 1];
                out.data[ch * oh * ow + r * ow + cc] = s * 0.25;
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour 2x upsampling, per channel.
pub fn upsample2(x: &RealTensor) -> Result<RealTensor> {
    if x.shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "upsample2 expects [c, h, w], got {:?}",
            x.shape
        )));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = RealTensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for r in 0..oh {
            for cc in 0..ow {
                out.data[ch * oh * ow + r * ow + cc] = x.data[ch * h * w + (r / 2) * w + cc / 2];
            }
        }
    }
    Ok(out)
}

/// Concatenate along the channel dimension.
pub fn concat_channels(a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    if a.shape.len() != 3 || b.shape.len() != 3 || a.shape[1..] != b.shape[1..] {
        return Err(Error::ShapeMismatch(format!(
            "concat_channels {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    RealTensor::new(vec![a.shape[0] + b.shape[0], a.shape[1], a.shape[2]], data)
}

/// Root-sum-of-squares across the coil dimension of a complex tensor.
/// `[coils, h, w]` -> `[h, w]`; a plain `[h, w]` input is treated as one
/// coil, in which case this is the complex magnitude.
pub fn rss_combine(z: &ComplexTensor) -> Result<RealTensor> {
    let (h, w) = z.hw()?;
    let n = h * w;
    let coils = z.len() / n;
    let mut out = RealTensor::zeros(&[h, w]);
    for p in 0..n {
        let mut acc = 0.0;
        for c in 0..coils {
            acc += z.data[c * n + p].norm_sqr();
        }
        out.data[p] = acc.sqrt();
    }
    Ok(out)
}
