//! Dense `f64` arrays and a tape-based reverse-mode differentiation engine.
//!
//! The engine is deliberately narrow: it offers the handful of operations the
//! adaptive convolution models need (elementwise arithmetic, affine maps,
//! sliding-window convolution with static or per-sample filters, filter
//! emission from a code vector, masked max-over-time pooling, dropout and two
//! cross-entropy losses). There is no broadcasting; every elementwise operation
//! requires identical shapes.
//!
//! Layout conventions used throughout the crate:
//!
//! * a batch of embedded sentences is `[B, T, d]` (one row per token),
//! * static filters are `[K, h, d]`, per-sample filter banks `[B, K, h, d]`,
//! * convolution outputs are `[B, K, T - h + 1]`,
//! * window masks are `B * (T - h + 1)` booleans in row-major order.

mod gradcheck;
mod graph;
mod params;

pub use gradcheck::{finite_diff_check, GradCheckReport, GroupReport};
pub use graph::{Graph, LossKind, Mode, PointwiseKind, Var, ElementwiseKind};
pub use params::{ParamId, ParamStore};

use rand::Rng;

use crate::error::TensorError;

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                op: "tensor",
                detail: format!("shape {shape:?} holds {numel} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Rank-1 tensor over `values`.
    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values,
        }
    }

    /// Uniform samples in `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self, TensorError> {
        Tensor::new(shape.to_vec(), self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Splits along `axis` into consecutive pieces of the given extents.
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>, TensorError> {
        if axis >= self.rank() || sizes.iter().sum::<usize>() != self.shape[axis] {
            return Err(TensorError::InvalidShape {
                op: "split",
                detail: format!("cannot split {:?} along {axis} into {sizes:?}", self.shape),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let row = self.shape[axis] * inner;
        let mut offset = 0;
        let mut pieces = Vec::with_capacity(sizes.len());
        for &size in sizes {
            let mut data = Vec::with_capacity(outer * size * inner);
            for o in 0..outer {
                let start = o * row + offset * inner;
                data.extend_from_slice(&self.data[start..start + size * inner]);
            }
            let mut shape = self.shape.clone();
            shape[axis] = size;
            pieces.push(Tensor { shape, data });
            offset += size;
        }
        Ok(pieces)
    }

    /// Repeats this tensor `count` times along a new leading axis.
    pub fn repeat_leading(&self, count: usize) -> Tensor {
        let mut shape = Vec::with_capacity(self.rank() + 1);
        shape.push(count);
        shape.extend_from_slice(&self.shape);
        let mut data = Vec::with_capacity(count * self.numel());
        for _ in 0..count {
            data.extend_from_slice(&self.data);
        }
        Tensor { shape, data }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
