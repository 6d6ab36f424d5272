//! Reverse-mode differentiation over a fixed operation vocabulary.
//!
//! Every computation graph in this crate is statically known (the attack
//! loss and the two small learned reconstructors), so the tape records a
//! closed set of operations rather than providing general autodiff.
//!
//! Complex nodes carry gradients as independent real/imaginary adjoint
//! pairs (Wirtinger-style for a real-valued root). For a complex-linear
//! map `y = A x` with unitary `A`, the adjoint is `A^H`, which is why the
//! backward rule of `fft2c` is `ifft2c` and vice versa.
//!
//! A tape is single-threaded by construction; use one tape per attack or
//! training worker.


use crate::error::{Error, Result};
use crate::numerics::conv::{check_conv_shapes, conv2d};
use crate::numerics::fft::{fft2c, ifft2c};
use crate::numerics::ops::{avg_pool2, clip, concat_channels, relu, rss_combine, upsample2};
use crate::numerics::tensor::{ComplexTensor, RealTensor};

pub type NodeId = usize;

/// A value flowing through the graph.
#[derive(Debug, Clone)]
pub enum Value {
    Scalar(f64),
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl Value {
    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(v) => Ok(*v),
            _ => Err(Error::ShapeMismatch("expected scalar value".into())),
        }
    }

    pub fn as_real(&self) -> Result<&RealTensor> {
        match self {
            Value::Real(t) => Ok(t),
            _ => Err(Error::ShapeMismatch("expected real tensor value".into())),
        }
    }

    pub fn as_complex(&self) -> Result<&ComplexTensor> {
        match self {
            Value::Complex(t) => Ok(t),
            _ => Err(Error::ShapeMismatch("expected complex tensor value".into())),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    LeafReal,
    LeafComplex,
    LeafScalar,
    AddReal(NodeId, NodeId),
    SubReal(NodeId, NodeId),
    MulReal(NodeId, NodeId),
    ScaleReal(NodeId, f64),
    Relu(NodeId),
    Clip(NodeId, f64, f64),
    MulConstReal(NodeId, RealTensor),
    Conv2d {
        x: NodeId,
        kernel: NodeId,
        bias: NodeId,
    },
    AvgPool2(NodeId),
    Upsample2(NodeId),
    ConcatChannels(NodeId, NodeId),
    ReduceMax(NodeId),
    SumSquares(NodeId),
    Sum(NodeId),
    DivByScalar(NodeId, NodeId),
    MulByScalar(NodeId, NodeId),
    ScalarAdd(NodeId, NodeId),
    ScalarScale(NodeId, f64),
    ScalarMax(NodeId, f64),
    Fft2c(NodeId),
    Ifft2c(NodeId),
    AddComplex(NodeId, NodeId),
    SubComplex(NodeId, NodeId),
    /// Per-column 0/1 multiply on the trailing width dimension.
    MaskColumns(NodeId, Vec<f64>),
    ScaleComplexByScalar(NodeId, NodeId),
    /// Complex coil maps (constant) times a real image node: `[h,w]` -> `[coils,h,w]`.
    MapTimesReal(NodeId, ComplexTensor),
    Rss(NodeId),
    /// Real node becomes the real part; the imaginary part is a constant.
    ComplexFromRe(NodeId),
    /// Same data, new shape.
    Reshape(NodeId),
    /// Length-1 real tensor viewed as a scalar (learned scalar parameters).
    TensorToScalar(NodeId),
    Abs(NodeId),
}

struct Node {
    op: Op,
    value: Value,
}

/// Gradients of the root with respect to every reachable node.
pub struct Gradients {
    adj: Vec<Option<Value>>,
}

impl Gradients {
    /// Adjoint of a node; zero-valued nodes that the root does not reach
    /// return `None`.
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.adj.get(id).and_then(|v| v.as_ref())
    }

    pub fn real(&self, id: NodeId) -> Result<&RealTensor> {
        self.get(id)
            .ok_or_else(|| Error::Numeric(format!("no adjoint for node {}", id)))?
            .as_real()
    }

    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.get(id)
            .ok_or_else(|| Error::Numeric(format!("no adjoint for node {}", id)))?
            .as_scalar()
    }
}

/// The recording tape. Operations are appended in topological order, so
/// the backward pass is a single reverse sweep.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    fn real(&self, id: NodeId) -> Result<&RealTensor> {
        self.nodes[id].value.as_real()
    }

    fn complex(&self, id: NodeId) -> Result<&ComplexTensor> {
        self.nodes[id].value.as_complex()
    }

    fn scalar(&self, id: NodeId) -> Result<f64> {
        self.nodes[id].value.as_scalar()
    }

    // ---- leaves ----

    pub fn leaf_real(&mut self, t: RealTensor) -> NodeId {
        self.push(Op::LeafReal, Value::Real(t))
    }

    pub fn leaf_complex(&mut self, t: ComplexTensor) -> NodeId {
        self.push(Op::LeafComplex, Value::Complex(t))
    }

    pub fn leaf_scalar(&mut self, v: f64) -> NodeId {
        self.push(Op::LeafScalar, Value::Scalar(v))
    }

    // ---- real tensor ops ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.zip(self.real(b)?, |x, y| x + y)?;
        Ok(self.push(Op::AddReal(a, b), Value::Real(v)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.zip(self.real(b)?, |x, y| x - y)?;
        Ok(self.push(Op::SubReal(a, b), Value::Real(v)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.zip(self.real(b)?, |x, y| x * y)?;
        Ok(self.push(Op::MulReal(a, b), Value::Real(v)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.real(a)?.map(|x| c * x);
        Ok(self.push(Op::ScaleReal(a, c), Value::Real(v)))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = relu(self.real(a)?);
        Ok(self.push(Op::Relu(a), Value::Real(v)))
    }

    pub fn clip(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if lo >= hi {
            return Err(Error::InvalidParam(format!("clip bounds {} >= {}", lo, hi)));
        }
        let v = clip(self.real(a)?, lo, hi);
        Ok(self.push(Op::Clip(a, lo, hi), Value::Real(v)))
    }

    /// Elementwise multiply by a constant tensor (e.g. a binary region mask).
    pub fn mul_const(&mut self, a: NodeId, weights: &RealTensor) -> Result<NodeId> {
        let v = self.real(a)?.zip(weights, |x, w| x * w)?;
        Ok(self.push(Op::MulConstReal(a, weights.clone()), Value::Real(v)))
    }

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = conv2d(self.real(x)?, self.real(kernel)?, self.real(bias)?)?;
        Ok(self.push(Op::Conv2d { x, kernel, bias }, Value::Real(v)))
    }

    pub fn avg_pool2(&mut self, a: NodeId) -> Result<NodeId> {
        let v = avg_pool2(self.real(a)?)?;
        Ok(self.push(Op::AvgPool2(a), Value::Real(v)))
    }

    pub fn upsample2(&mut self, a: NodeId) -> Result<NodeId> {
        let v = upsample2(self.real(a)?)?;
        Ok(self.push(Op::Upsample2(a), Value::Real(v)))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = concat_channels(self.real(a)?, self.real(b)?)?;
        Ok(self.push(Op::ConcatChannels(a, b), Value::Real(v)))
    }

    // ---- reductions to scalar ----

    pub fn reduce_max(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.max_value();
        Ok(self.push(Op::ReduceMax(a), Value::Scalar(v)))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.data.iter().map(|x| x * x).sum();
        Ok(self.push(Op::SumSquares(a), Value::Scalar(v)))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.data.iter().sum();
        Ok(self.push(Op::Sum(a), Value::Scalar(v)))
    }

    // ---- tensor-scalar ----

    pub fn div_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.scalar(s)?;
        if sv == 0.0 {
            return Err(Error::Numeric("division by zero scalar node".into()));
        }
        let v = self.real(a)?.map(|x| x / sv);
        Ok(self.push(Op::DivByScalar(a, s), Value::Real(v)))
    }

    pub fn mul_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.scalar(s)?;
        let v = self.real(a)?.map(|x| x * sv);
        Ok(self.push(Op::MulByScalar(a, s), Value::Real(v)))
    }

    // ---- scalar ops ----

    pub fn scalar_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.scalar(a)? + self.scalar(b)?;
        Ok(self.push(Op::ScalarAdd(a, b), Value::Scalar(v)))
    }

    pub fn scalar_scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.scalar(a)? * c;
        Ok(self.push(Op::ScalarScale(a, c), Value::Scalar(v)))
    }

    /// `max(a, floor)` with a constant floor; guards divisions by a
    /// data-dependent normalizer.
    pub fn scalar_max(&mut self, a: NodeId, floor: f64) -> Result<NodeId> {
        let v = self.scalar(a)?.max(floor);
        Ok(self.push(Op::ScalarMax(a, floor), Value::Scalar(v)))
    }

    // ---- complex ops ----

    pub fn fft2c(&mut self, a: NodeId) -> Result<NodeId> {
        let v = fft2c(self.complex(a)?)?;
        Ok(self.push(Op::Fft2c(a), Value::Complex(v)))
    }

    pub fn ifft2c(&mut self, a: NodeId) -> Result<NodeId> {
        let v = ifft2c(self.complex(a)?)?;
        Ok(self.push(Op::Ifft2c(a), Value::Complex(v)))
    }

    pub fn add_complex(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.complex(a)?, self.complex(b)?);
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", ta.shape, tb.shape)));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let v = ComplexTensor::new(ta.shape.clone(), data)?;
        Ok(self.push(Op::AddComplex(a, b), Value::Complex(v)))
    }

    pub fn sub_complex(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.complex(a)?, self.complex(b)?);
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", ta.shape, tb.shape)));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let v = ComplexTensor::new(ta.shape.clone(), data)?;
        Ok(self.push(Op::SubComplex(a, b), Value::Complex(v)))
    }

    /// Multiply every column `c` of the trailing width dimension by
    /// `pattern[c]` (0/1 sampling pattern), across all rows and coils.
    pub fn mask_columns(&mut self, a: NodeId, pattern: &[f64]) -> Result<NodeId> {
        let t = self.complex(a)?;
        let (_, w) = t.hw()?;
        if pattern.len() != w {
            return Err(Error::ShapeMismatch(format!(
                "mask pattern length {} vs width {}",
                pattern.len(),
                w
            )));
        }
        let v = mask_columns_apply(t, pattern);
        Ok(self.push(Op::MaskColumns(a, pattern.to_vec()), Value::Complex(v)))
    }

    pub fn scale_complex_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.scalar(s)?;
        let t = self.complex(a)?;
        let data = t.data.iter().map(|z| z * sv).collect();
        let v = ComplexTensor::new(t.shape.clone(), data)?;
        Ok(self.push(Op::ScaleComplexByScalar(a, s), Value::Complex(v)))
    }

    /// Constant coil maps `[coils, h, w]` times a real image node `[h, w]`.
    pub fn map_times_real(&mut self, x: NodeId, maps: &ComplexTensor) -> Result<NodeId> {
        let img = self.real(x)?;
        let v = map_times_real_apply(img, maps)?;
        Ok(self.push(Op::MapTimesReal(x, maps.clone()), Value::Complex(v)))
    }

    /// Root-sum-of-squares over coils; magnitude for a single slice.
    pub fn rss(&mut self, a: NodeId) -> Result<NodeId> {
        let v = rss_combine(self.complex(a)?)?;
        Ok(self.push(Op::Rss(a), Value::Real(v)))
    }

    /// Combine a real node with a constant imaginary part.
    pub fn complex_from_re(&mut self, re: NodeId, im: &RealTensor) -> Result<NodeId> {
        let v = ComplexTensor::from_parts(self.real(re)?, im)?;
        Ok(self.push(Op::ComplexFromRe(re), Value::Complex(v)))
    }

    /// View the same data under a new shape of equal element count.
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.real(a)?;
        let v = RealTensor::new(shape.to_vec(), t.data.clone())?;
        Ok(self.push(Op::Reshape(a), Value::Real(v)))
    }

    /// Length-1 real tensor as a scalar node.
    pub fn tensor_to_scalar(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.real(a)?;
        if t.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "tensor_to_scalar needs one element, got {:?}",
                t.shape
            )));
        }
        let v = t.data[0];
        Ok(self.push(Op::TensorToScalar(a), Value::Scalar(v)))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.real(a)?.map(f64::abs);
        Ok(self.push(Op::Abs(a), Value::Real(v)))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar root. Errors if the root is not scalar.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        match self.nodes[root].value {
            Value::Scalar(_) => {}
            _ => {
                return Err(Error::Numeric(
                    "backward requires a scalar root node".into(),
                ))
            }
        }
        let mut adj: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adj[root] = Some(Value::Scalar(1.0));

        for id in (0..=root).rev() {
            let out_adj = match adj[id].take() {
                Some(v) => v,
                None => continue,
            };
            self.backprop_node(id, &out_adj, &mut adj)?;
            adj[id] = Some(out_adj);
        }
        Ok(Gradients { adj })
    }

    fn backprop_node(
        &self,
        id: NodeId,
        out_adj: &Value,
        adj: &mut [Option<Value>],
    ) -> Result<()> {
        match &self.nodes[id].op {
            Op::LeafReal | Op::LeafComplex | Op::LeafScalar => {}

            Op::AddReal(a, b) => {
                let g = out_adj.as_real()?;
                accum_real(adj, *a, g);
                accum_real(adj, *b, g);
            }
            Op::SubReal(a, b) => {
                let g = out_adj.as_real()?;
                accum_real(adj, *a, g);
                accum_real_scaled(adj, *b, g, -1.0);
            }
            Op::MulReal(a, b) => {
                let g = out_adj.as_real()?;
                let ga = g.zip(self.real(*b)?, |x, y| x * y)?;
                let gb = g.zip(self.real(*a)?, |x, y| x * y)?;
                accum_real(adj, *a, &ga);
                accum_real(adj, *b, &gb);
            }
            Op::ScaleReal(a, c) => {
                accum_real_scaled(adj, *a, out_adj.as_real()?, *c);
            }
            Op::Relu(a) => {
                let g = out_adj.as_real()?.zip(self.real(*a)?, |gy, x| {
                    if x > 0.0 {
                        gy
                    } else {
                        0.0
                    }
                })?;
                accum_real(adj, *a, &g);
            }
            Op::Clip(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let g = out_adj.as_real()?.zip(self.real(*a)?, |gy, x| {
                    if x >= lo && x <= hi {
                        gy
                    } else {
                        0.0
                    }
                })?;
                accum_real(adj, *a, &g);
            }
            Op::MulConstReal(a, weights) => {
                let g = out_adj.as_real()?.zip(weights, |gy, w| gy * w)?;
                accum_real(adj, *a, &g);
            }
            Op::Conv2d { x, kernel, bias } => {
                let (gx, gk, gb) = conv2d_backward(
                    self.real(*x)?,
                    self.real(*kernel)?,
                    self.real(*bias)?,
                    out_adj.as_real()?,
                )?;
                accum_real(adj, *x, &gx);
                accum_real(adj, *kernel, &gk);
                accum_real(adj, *bias, &gb);
            }
            Op::AvgPool2(a) => {
                let g = out_adj.as_real()?;
                let x = self.real(*a)?;
                let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let (oh, ow) = (h / 2, w / 2);
                let mut gx = RealTensor::zeros(&x.shape);
                for ch in 0..c {
                    for r in 0..oh {
                        for cc in 0..ow {
                            let gy = g.data[ch * oh * ow + r * ow + cc] * 0.25;
                            let base = ch * h * w;
                            gx.data[base + 2 * r * w + 2 * cc] += gy;
                            gx.data[base + 2 * r * w + 2 * cc + 1] += gy;
                            gx.data[base + (2 * r + 1) * w + 2 * cc] += gy;
                            gx.data[base + (2 * r + 1) * w + 2 * cc + 1] += gy;
                        }
                    }
                }
                accum_real(adj, *a, &gx);
            }
            Op::Upsample2(a) => {
                let g = out_adj.as_real()?;
                let x = self.real(*a)?;
                let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let (oh, ow) = (2 * h, 2 * w);
                let mut gx = RealTensor::zeros(&x.shape);
                for ch in 0..c {
                    for r in 0..oh {
                        for cc in 0..ow {
                            gx.data[ch * h * w + (r / 2) * w + cc / 2] +=
                                g.data[ch * oh * ow + r * ow + cc];
                        }
                    }
                }
                accum_real(adj, *a, &gx);
            }
            Op::ConcatChannels(a, b) => {
                let g = out_adj.as_real()?;
                let ta = self.real(*a)?;
                let na = ta.len();
                let ga = RealTensor::new(ta.shape.clone(), g.data[..na].to_vec())?;
                let tb = self.real(*b)?;
                let gb = RealTensor::new(tb.shape.clone(), g.data[na..].to_vec())?;
                accum_real(adj, *a, &ga);
                accum_real(adj, *b, &gb);
            }
            Op::ReduceMax(a) => {
                let gs = out_adj.as_scalar()?;
                let x = self.real(*a)?;
                // Subgradient: route through the first argmax.
                let mut idx = 0;
                let mut best = f64::NEG_INFINITY;
                for (i, &v) in x.data.iter().enumerate() {
                    if v > best {
                        best = v;
                        idx = i;
                    }
                }
                let mut gx = RealTensor::zeros(&x.shape);
                gx.data[idx] = gs;
                accum_real(adj, *a, &gx);
            }
            Op::SumSquares(a) => {
                let gs = out_adj.as_scalar()?;
                let gx = self.real(*a)?.map(|x| 2.0 * x * gs);
                accum_real(adj, *a, &gx);
            }
            Op::Sum(a) => {
                let gs = out_adj.as_scalar()?;
                let gx = RealTensor::full(&self.real(*a)?.shape, gs);
                accum_real(adj, *a, &gx);
            }
            Op::DivByScalar(a, s) => {
                let g = out_adj.as_real()?;
                let sv = self.scalar(*s)?;
                accum_real_scaled(adj, *a, g, 1.0 / sv);
                let x = self.real(*a)?;
                let gs: f64 = g
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(gy, xv)| -gy * xv / (sv * sv))
                    .sum();
                accum_scalar(adj, *s, gs);
            }
            Op::MulByScalar(a, s) => {
                let g = out_adj.as_real()?;
                let sv = self.scalar(*s)?;
                accum_real_scaled(adj, *a, g, sv);
                let x = self.real(*a)?;
                let gs: f64 = g.data.iter().zip(&x.data).map(|(gy, xv)| gy * xv).sum();
                accum_scalar(adj, *s, gs);
            }
            Op::ScalarAdd(a, b) => {
                let gs = out_adj.as_scalar()?;
                accum_scalar(adj, *a, gs);
                accum_scalar(adj, *b, gs);
            }
            Op::ScalarScale(a, c) => {
                accum_scalar(adj, *a, out_adj.as_scalar()? * c);
            }
            Op::ScalarMax(a, floor) => {
                let pass = self.scalar(*a)? > *floor;
                if pass {
                    accum_scalar(adj, *a, out_adj.as_scalar()?);
                }
            }
            Op::Fft2c(a) => {
                // Unitary: adjoint of fft2c is ifft2c on the adjoint pair.
                let g = ifft2c(out_adj.as_complex()?)?;
                accum_complex(adj, *a, &g);
            }
            Op::Ifft2c(a) => {
                let g = fft2c(out_adj.as_complex()?)?;
                accum_complex(adj, *a, &g);
            }
            Op::AddComplex(a, b) => {
                let g = out_adj.as_complex()?;
                accum_complex(adj, *a, g);
                accum_complex(adj, *b, g);
            }
            Op::SubComplex(a, b) => {
                let g = out_adj.as_complex()?;
                accum_complex(adj, *a, g);
                let neg = ComplexTensor::new(g.shape.clone(), g.data.iter().map(|z| -z).collect())?;
                accum_complex(adj, *b, &neg);
            }
            Op::MaskColumns(a, pattern) => {
                let g = mask_columns_apply(out_adj.as_complex()?, pattern);
                accum_complex(adj, *a, &g);
            }
            Op::ScaleComplexByScalar(a, s) => {
                let g = out_adj.as_complex()?;
                let sv = self.scalar(*s)?;
                let ga =
                    ComplexTensor::new(g.shape.clone(), g.data.iter().map(|z| z * sv).collect())?;
                accum_complex(adj, *a, &ga);
                let x = self.complex(*a)?;
                let gs: f64 = g
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(gy, xv)| gy.re * xv.re + gy.im * xv.im)
                    .sum();
                accum_scalar(adj, *s, gs);
            }
            Op::MapTimesReal(x, maps) => {
                let g = out_adj.as_complex()?;
                let img = self.real(*x)?;
                let n = img.len();
                let coils = maps.len() / n;
                let mut gx = RealTensor::zeros(&img.shape);
                for c in 0..coils {
                    for p in 0..n {
                        let m = maps.data[c * n + p];
                        let gy = g.data[c * n + p];
                        gx.data[p] += m.re * gy.re + m.im * gy.im;
                    }
                }
                accum_real(adj, *x, &gx);
            }
            Op::Rss(a) => {
                let g = out_adj.as_real()?;
                let z = self.complex(*a)?;
                let y = self.real(id)?;
                let n = y.len();
                let coils = z.len() / n;
                let mut gz = ComplexTensor::zeros(&z.shape);
                for c in 0..coils {
                    for p in 0..n {
                        let denom = y.data[p];
                        if denom > 0.0 {
                            let scale = g.data[p] / denom;
                            gz.data[c * n + p] = z.data[c * n + p] * scale;
                        }
                    }
                }
                accum_complex(adj, *a, &gz);
            }
            Op::ComplexFromRe(re) => {
                let g = out_adj.as_complex()?;
                accum_real(adj, *re, &g.real_part());
            }
            Op::Reshape(a) => {
                let g = out_adj.as_real()?;
                let back = RealTensor::new(self.real(*a)?.shape.clone(), g.data.clone())?;
                accum_real(adj, *a, &back);
            }
            Op::TensorToScalar(a) => {
                let gs = out_adj.as_scalar()?;
                let g = RealTensor::new(self.real(*a)?.shape.clone(), vec![gs])?;
                accum_real(adj, *a, &g);
            }
            Op::Abs(a) => {
                // Subgradient at 0 is 0.
                let g = out_adj.as_real()?.zip(self.real(*a)?, |gy, x| {
                    if x > 0.0 {
                        gy
                    } else if x < 0.0 {
                        -gy
                    } else {
                        0.0
                    }
                })?;
                accum_real(adj, *a, &g);
            }
        }
        Ok(())
    }
}

fn mask_columns_apply(t: &ComplexTensor, pattern: &[f64]) -> ComplexTensor {
    let w = *t.shape.last().unwrap();
    let data = t
        .data
        .iter()
        .enumerate()
        .map(|(i, z)| z * pattern[i % w])
        .collect();
    ComplexTensor::new(t.shape.clone(), data).unwrap()
}

fn map_times_real_apply(img: &RealTensor, maps: &ComplexTensor) -> Result<ComplexTensor> {
    if img.shape.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "map_times_real image must be [h, w], got {:?}",
            img.shape
        )));
    }
    let n = img.len();
    if maps.len() % n != 0 || maps.shape[maps.shape.len() - 2..] != img.shape[..] {
        return Err(Error::ShapeMismatch(format!(
            "coil maps {:?} incompatible with image {:?}",
            maps.shape, img.shape
        )));
    }
    let coils = maps.len() / n;
    let mut out = ComplexTensor::zeros(&maps.shape);
    for c in 0..coils {
        for p in 0..n {
            out.data[c * n + p] = maps.data[c * n + p] * img.data[p];
        }
    }
    let _ = coils;
    Ok(out)
}

fn conv2d_backward(
    x: &RealTensor,
    kernel: &RealTensor,
    bias: &RealTensor,
    gy: &RealTensor,
) -> Result<(RealTensor, RealTensor, RealTensor)> {
    let (c_in, h, w, c_out, kh, kw) = check_conv_shapes(x, kernel, bias)?;
    let (ph, pw) = (kh / 2, kw / 2);
    let mut gx = RealTensor::zeros(&x.shape);
    let mut gk = RealTensor::zeros(&kernel.shape);
    let mut gb = RealTensor::zeros(&bias.shape);
    for co in 0..c_out {
        for r in 0..h {
            for c in 0..w {
                let g = gy.data[co * h * w + r * w + c];
                gb.data[co] += g;
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
                            let xi = xbase + rr as usize * w + cc as usize;
                            let ki = kbase + dr * kw + dc;
                            gx.data[xi] += g * kernel.data[ki];
                            gk.data[ki] += g * x.data[xi];
                        }
                    }
                }
            }
        }
    }
    Ok((gx, gk, gb))
}

fn accum_real(adj: &mut [Option<Value>], id: NodeId, g: &RealTensor) {
    match &mut adj[id] {
        Some(Value::Real(acc)) => {
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a += b;
            }
        }
        None => adj[id] = Some(Value::Real(g.clone())),
        _ => unreachable!("adjoint kind mismatch"),
    }
}

fn accum_real_scaled(adj: &mut [Option<Value>], id: NodeId, g: &RealTensor, c: f64) {
    let scaled = g.map(|v| v * c);
    accum_real(adj, id, &scaled);
}

fn accum_complex(adj: &mut [Option<Value>], id: NodeId, g: &ComplexTensor) {
    match &mut adj[id] {
        Some(Value::Complex(acc)) => {
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a += b;
            }
        }
        None => adj[id] = Some(Value::Complex(g.clone())),
        _ => unreachable!("adjoint kind mismatch"),
    }
}

fn accum_scalar(adj: &mut [Option<Value>], id: NodeId, g: f64) {
    match &mut adj[id] {
        Some(Value::Scalar(acc)) => *acc += g,
        None => adj[id] = Some(Value::Scalar(g)),
        _ => unreachable!("adjoint kind mismatch"),
    }
}
