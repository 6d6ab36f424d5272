//! Synthetic ellipse phantoms: piecewise-constant images in [0, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::RealTensor;

/// Sum of randomly placed, rotated, intensity-weighted ellipses, clipped
/// to [0, 1]. Deterministic per seed. Piecewise-constant regions make
/// these a good fit for TV reconstruction.
pub fn gen_phantom(h: usize, w: usize, n_ellipses: usize, seed: u64) -> Result<RealTensor> {
    gen_phantom_with_bar(h, w, n_ellipses, 0.0, seed)
}

/// Like [`gen_phantom`], but with probability `bar_prob` the image also
/// contains a bright horizontal bar in the center (2 x 11 px at 32 x 32,
/// scaled with the image). Used to train models whose prior includes a
/// sharp centered detail; `bar_prob = 0` reproduces [`gen_phantom`]
/// exactly.
pub fn gen_phantom_with_bar(
    h: usize,
    w: usize,
    n_ellipses: usize,
    bar_prob: f64,
    seed: u64,
) -> Result<RealTensor> {
    if n_ellipses < 1 {
        return Err(Error::InvalidParam(
            "n_ellipses must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&bar_prob) {
        return Err(Error::InvalidParam(format!(
            "bar_prob must be in [0, 1], got {bar_prob}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = RealTensor::zeros(&[h, w]);
    for _ in 0..n_ellipses {
        let cx = rng.gen_range(0.25..0.75) * w as f64;
        let cy = rng.gen_range(0.25..0.75) * h as f64;
        // Radii down to ~1 px produce thin, sharp features alongside the
        // larger smooth regions; the floor keeps every ellipse rasterizable.
        let rx = (rng.gen_range(0.03..0.3) * w as f64).max(0.8);
        let ry = (rng.gen_range(0.03..0.3) * h as f64).max(0.8);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let intensity = rng.gen_range(0.2..0.7);
        let (s, c) = theta.sin_cos();
        for r in 0..h {
            for col in 0..w {
                let dx = col as f64 + 0.5 - cx;
                let dy = r as f64 + 0.5 - cy;
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if (u / rx).powi(2) + (v / ry).powi(2) <= 1.0 {
                    img.data[r * w + col] += intensity;
                }
            }
        }
    }
    let mut img = img.map(|v| v.clamp(0.0, 1.0));
    if rng.gen::<f64>() < bar_prob {
        // Centered bar, geometry scaled from 11 x 2 px at 32 x 32. The
        // intensity overwrites whatever is underneath so the bar is always
        // a crisp, near-maximal feature.
        let bl = ((11 * w + 16) / 32).max(1);
        let bw = ((2 * h + 16) / 32).max(1);
        let intensity = rng.gen_range(0.75..1.0);
        let (ch, cw) = (h / 2, w / 2);
        for dr in 0..bw {
            for dc in 0..bl {
                let r = ch + dr - bw / 2;
                let c = cw + dc - bl / 2;
                if r < h && c < w {
                    img.set(r, c, intensity);
                }
            }
        }
    }
    Ok(img)
}
