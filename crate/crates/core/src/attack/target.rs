//! Construction of the artificial target detail: a bright shape drawn
//! into the clean reconstruction, plus the region mask the attack loss
//! uses to localize it.

use crate::attack::{AttackSpec, TargetShape};
use crate::error::{Error, Result};
use crate::numerics::tensor::RealTensor;

#[derive(Debug, Clone)]
pub struct TargetRender {
    /// Clean reconstruction with the shape painted at max intensity.
    pub y_t: RealTensor,
    /// Binary region mask: shape support dilated by `mask_dilation`.
    pub mask: RealTensor,
    /// True when painting changed nothing (max-intensity rule on a
    /// near-constant image); the attack still runs but reports it.
    pub degenerate: bool,
}

/// Pixels of the undilated shape support, centered in an h-by-w image.
fn shape_support(shape: TargetShape, h: usize, w: usize) -> Result<Vec<(usize, usize)>> {
    let (ch, cw) = (h as isize / 2, w as isize / 2);
    let mut pixels = Vec::new();
    let mut push = |r: isize, c: isize| -> Result<()> {
        if r < 0 || r >= h as isize || c < 0 || c >= w as isize {
            return Err(Error::InvalidParam(format!(
                "target shape exceeds {}x{} image bounds at ({}, {})",
                h, w, r, c
            )));
        }
        pixels.push((r as usize, c as usize));
        Ok(())
    };
    match shape {
        TargetShape::Line { length, width } | TargetShape::Rectangle { height: width, width: length } => {
            if length == 0 || width == 0 {
                return Err(Error::InvalidParam("target shape has zero extent".into()));
            }
            for dr in 0..width as isize {
                for dc in 0..length as isize {
                    push(ch - width as isize / 2 + dr, cw - length as isize / 2 + dc)?;
                }
            }
        }
        TargetShape::Ellipse { rx, ry } => {
            if rx == 0 || ry == 0 {
                return Err(Error::InvalidParam("target shape has zero extent".into()));
            }
            for dr in -(ry as isize)..=ry as isize {
                for dc in -(rx as isize)..=rx as isize {
                    let fr = dr as f64 / ry as f64;
                    let fc = dc as f64 / rx as f64;
                    if fr * fr + fc * fc <= 1.0 {
                        push(ch + dr, cw + dc)?;
                    }
                }
            }
        }
    }
    Ok(pixels)
}

/// Paint the configured shape into `clean_recon` at the image's maximum
/// intensity and return it with the dilated region mask.
pub fn render_target(clean_recon: &RealTensor, spec: &AttackSpec) -> Result<TargetRender> {
    if !clean_recon.all_finite() {
        return Err(Error::Numeric("clean reconstruction is not finite".into()));
    }
    let (h, w) = clean_recon.hw()?;
    let support = shape_support(spec.target, h, w)?;
    let intensity = clean_recon.max_value();

    let mut y_t = clean_recon.clone();
    for &(r, c) in &support {
        y_t.set(r, c, intensity);
    }

    // Dilation by Chebyshev distance, clamped to the image.
    let d = spec.mask_dilation as isize;
    let mut mask = RealTensor::zeros(&[h, w]);
    for &(r, c) in &support {
        for dr in -d..=d {
            for dc in -d..=d {
                let rr = r as isize + dr;
                let cc = c as isize + dc;
                if rr >= 0 && rr < h as isize && cc >= 0 && cc < w as isize {
                    mask.set(rr as usize, cc as usize, 1.0);
                }
            }
        }
    }

    let degenerate = y_t
        .data
        .iter()
        .zip(&clean_recon.data)
        .all(|(a, b)| (a - b).abs() < 1e-12);
    Ok(TargetRender {
        y_t,
        mask,
        degenerate,
    })
}
