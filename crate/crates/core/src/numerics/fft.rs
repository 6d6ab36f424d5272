//! Centered, orthonormal 2-D Fourier transforms on power-of-two grids.
//!
//! Conventions, fixed as part of the data format:
//! - `fft2c(x) = fftshift(fft2(ifftshift(x))) / sqrt(N)` with `N = h * w`,
//!   applied independently to every leading index (e.g. per coil).
//! - `ifft2c` is the exact inverse, also scaled by `1 / sqrt(N)`, so the
//!   pair is unitary and Parseval holds: `||x||_2 = ||fft2c(x)||_2`.
//! - "Centered" means the DC component sits at `(h/2, w/2)`, the usual
//!   k-space display convention.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::tensor::{is_power_of_two, ComplexTensor};

/// Radix-2 iterative Cooley-Tukey, in place. `inverse` flips the twiddle
/// sign; no scaling is applied here.
fn fft1d(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    debug_assert!(is_power_of_two(n));

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2] * w;
                buf[i + k] = u + v;
                buf[i + k + len / 2] = u - v;
                w *= wlen;
            }
            i += len;
        }
        len <<= 1;
    }
}

fn check_spatial(x: &ComplexTensor) -> Result<(usize, usize)> {
    let (h, w) = x.hw()?;
    if !is_power_of_two(h) || !is_power_of_two(w) {
        return Err(Error::NonPowerOfTwo(h, w));
    }
    Ok((h, w))
}

/// Roll by (h/2, w/2). For even sizes fftshift and ifftshift coincide.
fn shift2(slice: &mut [Complex64], h: usize, w: usize) {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        let rr = (r + h / 2) % h;
        for c in 0..w {
            let cc = (c + w / 2) % w;
            out[rr * w + cc] = slice[r * w + c];
        }
    }
    slice.copy_from_slice(&out);
}

fn transform2(x: &ComplexTensor, inverse: bool) -> Result<ComplexTensor> {
    let (h, w) = check_spatial(x)?;
    let n = h * w;
    let slices = x.len() / n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = x.clone();
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for s in 0..slices {
        let slice = &mut out.data[s * n..(s + 1) * n];
        shift2(slice, h, w); // ifftshift (even dims)
        for r in 0..h {
            fft1d(&mut slice[r * w..(r + 1) * w], inverse);
        }
        for c in 0..w {
            for r in 0..h {
                col[r] = slice[r * w + c];
            }
            fft1d(&mut col, inverse);
            for r in 0..h {
                slice[r * w + c] = col[r];
            }
        }
        shift2(slice, h, w); // fftshift
        for v in slice.iter_mut() {
            *v *= scale;
        }
    }
    Ok(out)
}

/// Centered orthonormal 2-D DFT over the trailing two dims, per leading index.
pub fn fft2c(x: &ComplexTensor) -> Result<ComplexTensor> {
    transform2(x, false)
}

/// Exact inverse of [`fft2c`].
pub fn ifft2c(y: &ComplexTensor) -> Result<ComplexTensor> {
    transform2(y, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::RealTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(shape: &[usize], seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexTensor::new(shape.to_vec(), data).unwrap()
    }

    /// Direct O(n^2) centered orthonormal DFT, written against the stated
    /// convention rather than the FFT code path.
    pub(crate) fn dft2c_naive(x: &ComplexTensor) -> ComplexTensor {
        let (h, w) = x.hw().unwrap();
        let n = h * w;
        let slices = x.len() / n;
        let mut out = ComplexTensor::zeros(&x.shape);
        let scale = 1.0 / (n as f64).sqrt();
        for s in 0..slices {
            for kr in 0..h {
                for kc in 0..w {
                    // Centered frequencies and positions run over
                    // -h/2 .. h/2-1 relative to the grid center.
                    let fr = kr as f64 - (h / 2) as f64;
                    let fc = kc as f64 - (w / 2) as f64;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r in 0..h {
                        for c in 0..w {
                            let pr = r as f64 - (h / 2) as f64;
                            let pc = c as f64 - (w / 2) as f64;
                            let ang = -2.0 * std::f64::consts::PI
                                * (fr * pr / h as f64 + fc * pc / w as f64);
                            acc += x.data[s * n + r * w + c]
                                * Complex64::new(ang.cos(), ang.sin());
                        }
                    }
                    out.data[s * n + kr * w + kc] = acc * scale;
                }
            }
        }
        out
    }

    #[test]
    fn delta_at_center_gives_flat_spectrum() {
        let mut img = RealTensor::zeros(&[8, 8]);
        img.set(4, 4, 1.0);
        let y = fft2c(&ComplexTensor::from_real(&img)).unwrap();
        for z in &y.data {
            assert!((z.norm() - 1.0 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let x = ComplexTensor::zeros(&[8, 8]);
        let y = fft2c(&x).unwrap();
        assert!(y.data.iter().all(|z| z.norm() == 0.0));
        let y = ifft2c(&x).unwrap();
        assert!(y.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn matches_naive_dft_4x4() {
        let x = random_complex(&[4, 4], 7);
        let fast = fft2c(&x).unwrap();
        let slow = dft2c_naive(&x);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_16x16() {
        let x = random_complex(&[16, 16], 13);
        let y = ifft2c(&fft2c(&x).unwrap()).unwrap();
        let err: f64 = x
            .data
            .iter()
            .zip(&y.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err / x.norm2() < 1e-10);
    }

    #[test]
    fn constant_kspace_is_centered_delta() {
        let k = ComplexTensor::new(vec![8, 8], vec![Complex64::new(1.0 / 8.0, 0.0); 64]).unwrap();
        let img = ifft2c(&k).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let expect = if (r, c) == (4, 4) { 1.0 } else { 0.0 };
                assert!((img.data[r * 8 + c].re - expect).abs() < 1e-12);
                assert!(img.data[r * 8 + c].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_holds() {
        let x = random_complex(&[2, 16, 16], 5);
        let y = fft2c(&x).unwrap();
        assert!((x.norm2() - y.norm2()).abs() / x.norm2() < 1e-10);
    }

    #[test]
    fn linearity() {
        let x = random_complex(&[8, 8], 1);
        let y = random_complex(&[8, 8], 2);
        let (a, b) = (0.7, -1.3);
        let lhs = {
            let mix = ComplexTensor::new(
                vec![8, 8],
                x.data.iter().zip(&y.data).map(|(u, v)| a * u + b * v).collect(),
            )
            .unwrap();
            fft2c(&mix).unwrap()
        };
        let fx = fft2c(&x).unwrap();
        let fy = fft2c(&y).unwrap();
        for i in 0..64 {
            assert!((lhs.data[i] - (a * fx.data[i] + b * fy.data[i])).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_consistency() {
        // <fft2c(x), y> = <x, ifft2c(y)> under orthonormal scaling.
        let x = random_complex(&[8, 8], 3);
        let y = random_complex(&[8, 8], 4);
        let fx = fft2c(&x).unwrap();
        let iy = ifft2c(&y).unwrap();
        let lhs: Complex64 = fx.data.iter().zip(&y.data).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.data.iter().zip(&iy.data).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = ComplexTensor::zeros(&[6, 8]);
        assert!(matches!(fft2c(&x), Err(Error::NonPowerOfTwo(6, 8))));
        assert!(matches!(ifft2c(&x), Err(Error::NonPowerOfTwo(6, 8))));
    }

    #[test]
    fn deterministic() {
        let x = random_complex(&[16, 16], 42);
        let a = fft2c(&x).unwrap();
        let b = fft2c(&x).unwrap();
        assert_eq!(a.data, b.data);
    }
}
