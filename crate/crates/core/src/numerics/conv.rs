//! 2-D convolution (cross-correlation convention) with same-padding.
//!
//! Layouts: input `[c_in, h, w]`, kernel `[c_out, c_in, kh, kw]`, bias
//! `[c_out]`, output `[c_out, h, w]`. Zero padding, stride 1. Kernel
//! spatial sizes must be odd so "same" is well defined.

use crate::error::{Error, Result};
use crate::numerics::tensor::RealTensor;

pub(crate) fn check_conv_shapes(
    x: &RealTensor,
    kernel: &RealTensor,
    bias: &RealTensor,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if x.shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d input must be [c_in, h, w], got {:?}",
            x.shape
        )));
    }
    if kernel.shape.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d kernel must be [c_out, c_in, kh, kw], got {:?}",
            kernel.shape
        )));
    }
    let (c_in, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let (c_out, kc_in, kh, kw) = (
        kernel.shape[0],
        kernel.shape[1],
        kernel.shape[2],
        kernel.shape[3],
    );
    if kc_in != c_in {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {} input channels, input has {}",
            kc_in, c_in
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "kernel spatial size must be odd, got {}x{}",
            kh, kw
        )));
    }
    if bias.shape != vec![c_out] {
        return Err(Error::ShapeMismatch(format!(
            "bias must be [{}], got {:?}",
            c_out, bias.shape
        )));
    }
    Ok((c_in, h, w, c_out, kh, kw))
}

/// Cross-correlation with zero same-padding.
pub fn conv2d(x: &RealTensor, kernel: &RealTensor, bias: &RealTensor) -> Result<RealTensor> {
    let (c_in, h, w, c_out, kh, kw) = check_conv_shapes(x, kernel, bias)?;
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = RealTensor::zeros(&[c_out, h, w]);
    for co in 0..c_out {
        for r in 0..h {
            for c in 0..w {
                let mut acc = bias.data[co];
                for ci in 0..c_in {
                    let xbase = ci * h * w;
                    let kbase = ((co * c_in) + ci) * kh * kw;
                    for dr in 0..kh {
                        let rr = r as isize + dr as isize - ph as isize;
                        if rr < 0 || rr >= h as isize {
                            continue;
                        }
                        for dc in 0..kw {
                            let cc = c as isize + dc as isize - pw as isize;
                            if cc < 0 || cc >= w as isize {
                                continue;
                            }
                            acc += x.data[xbase + rr as usize * w + cc as usize]
                                * kernel.data[kbase + dr * kw + dc];
                        }
                    }
                }
                out.data[co * h * w + r * w + c] = acc;
            }
        }
    }
    Ok(out)
}
