//! Dense `f64` tensors (rank 1–3) with reverse-mode autodiff.
//!
//! [`Tensor`] is plain storage: a shape, a row-major data buffer, a
//! `requires_grad` flag, and an optional gradient buffer filled in by
//! [`Tape::backward`]. All arithmetic goes through a [`Tape`], which
//! records one node per operation and replays the recorded backward
//! rules in reverse. Tapes live for a single forward/backward pass.
//!
//! Tensors that do not carry gradients are immutable after construction
//! and safe to share across threads; per-step mutation (parameter
//! updates) happens outside the tape in the optimizer.

mod kernels;
mod ops;
mod tape;

pub use kernels::{matmul2, matmul2_seq, matmul2_nt, matmul2_tn};
pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};
use crate::rng::SeedRng;
use rand_distr::{Distribution, Normal};

/// Dense rank-1..3 tensor of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// Whether gradients should flow to this tensor when it is placed on
    /// a tape as a leaf.
    pub requires_grad: bool,
    /// Gradient buffer, same shape as `data`; present after a backward
    /// pass has reached this tensor.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::param(
                "shape",
                format!("rank must be 1..=3, got {:?}", shape),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::param(
                "shape",
                format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel]).expect("zeros: valid shape")
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let numel = shape.iter().product();
        Tensor::from_vec(shape, vec![value; numel]).expect("full: valid shape")
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![value]).expect("scalar")
    }

    /// Normal(0, std) entries drawn from `rng`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut SeedRng) -> Tensor {
        let normal = Normal::new(0.0, std).expect("valid std");
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| normal.sample(rng)).collect();
        Tensor::from_vec(shape, data).expect("randn: valid shape")
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

    /// (rows, cols) of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch {
                op: "dims2",
                lhs: self.shape.clone(),
                rhs: vec![0, 0],
            }),
        }
    }

    /// (batch, rows, cols) of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, r, c] => Ok((b, r, c)),
            _ => Err(Error::ShapeMismatch {
                op: "dims3",
                lhs: self.shape.clone(),
                rhs: vec![0, 0, 0],
            }),
        }
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    /// Number of rows when the tensor is viewed as `(numel/last, last)`.
    pub fn leading_rows(&self) -> usize {
        self.numel() / self.last_dim()
    }

    /// Mark as a trainable leaf.
    pub fn with_grad(mut self) -> Tensor {
        self.requires_grad = true;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Debug-build guard: ops on finite inputs must produce finite outputs.
pub(crate) fn debug_check_finite(op: &'static str, t: &Tensor) {
    debug_assert!(
        t.is_finite(),
        "non-finite value produced by `{}` (shape {:?})",
        op,
        t.shape()
    );
    let _ = (op, t);
}
