//! Dense real and complex tensors in double precision.
//!
//! Layouts are row-major with the spatial dimensions last, e.g.
//! `[coils, h, w]` for multi-coil k-space. Complex data is stored as
//! `Complex64` which is layout-compatible with interleaved `(re, im)`
//! pairs of `f64`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense real tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Dense complex tensor, row-major, interleaved (re, im) in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub shape: Vec<usize>,
    pub data: Vec<Complex64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl RealTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel(shape)],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Spatial (h, w) from the trailing two dimensions.
    pub fn hw(&self) -> Result<(usize, usize)> {
        if self.shape.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need at least 2 dims, got {:?}",
                self.shape
            )));
        }
        let n = self.shape.len();
        Ok((self.shape[n - 2], self.shape[n - 1]))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// 2-D pixel access for `[h, w]` tensors.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        let w = self.shape[self.shape.len() - 1];
        self.data[r * w + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let w = self.shape[self.shape.len() - 1];
        self.data[r * w + c] = v;
    }
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); numel(shape)],
        }
    }

    pub fn from_real(re: &RealTensor) -> Self {
        Self {
            shape: re.shape.clone(),
            data: re.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn hw(&self) -> Result<(usize, usize)> {
        if self.shape.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need at least 2 dims, got {:?}",
                self.shape
            )));
        }
        let n = self.shape.len();
        Ok((self.shape[n - 2], self.shape[n - 1]))
    }

    pub fn real_part(&self) -> RealTensor {
        RealTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn imag_part(&self) -> RealTensor {
        RealTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn from_parts(re: &RealTensor, im: &RealTensor) -> Result<Self> {
        if re.shape != im.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                re.shape, im.shape
            )));
        }
        Ok(Self {
            shape: re.shape.clone(),
            data: re
                .data
                .iter()
                .zip(&im.data)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect(),
        })
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn is_power_of_two(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_length() {
        assert!(RealTensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(ComplexTensor::new(vec![4], vec![Complex64::new(0.0, 0.0); 4]).is_ok());
    }

    #[test]
    fn parts_round_trip() {
        let z = ComplexTensor::new(
            vec![2, 2],
            vec![
                Complex64::new(1.0, -2.0),
                Complex64::new(0.5, 3.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 1.0),
            ],
        )
        .unwrap();
        let back = ComplexTensor::from_parts(&z.real_part(), &z.imag_part()).unwrap();
        assert_eq!(z, back);
    }
}
