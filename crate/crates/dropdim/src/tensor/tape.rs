//! Per-forward-pass recording tape.
//!
//! Each operation pushes one node holding its output value and a boxed
//! backward rule that scatters the output gradient to the node's
//! parents. Nodes only ever reference earlier nodes, so the vector is
//! already topologically ordered and [`Tape::backward`] is a single
//! reverse sweep that visits every op exactly once. Tapes are built,
//! differentiated, and dropped within one training step.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Backward rule: (output grad, all nodes, per-node grad buffers).
pub(crate) type BackFn = Box<dyn Fn(&[f64], &[Node], &mut [Option<Vec<f64>>])>;

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
    pub(crate) back: Option<BackFn>,
}

#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor; gradients flow to it iff
    /// `tensor.requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        let requires = tensor.requires_grad;
        self.push_node(tensor, requires, None)
    }

    /// Register a tensor that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push_node(tensor, false, None)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Gradient of the last backward pass w.r.t. node `id`, if it was
    /// reached and requires grad.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id].value.grad.as_deref()
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.nodes[id].value.grad.take()
    }

    pub(crate) fn push_node(&mut self, value: Tensor, requires_grad: bool, back: Option<BackFn>) -> NodeId {
        super::debug_check_finite("tape op", &value);
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            back,
        });
        id
    }

    /// Reverse sweep from a scalar root. Gradients of reached
    /// `requires_grad` nodes end up in their tensors' `grad` buffers.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if root >= self.nodes.len() {
            return Err(Error::index(format!(
                "backward root {} out of range ({} nodes)",
                root,
                self.nodes.len()
            )));
        }
        if self.nodes[root].value.numel() != 1 {
            return Err(Error::param(
                "root",
                format!(
                    "backward needs a scalar root, got shape {:?}",
                    self.nodes[root].value.shape()
                ),
            ));
        }
        if !self.nodes[root].requires_grad {
            return Err(Error::param(
                "root",
                "backward root does not depend on any trainable leaf".to_string(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root] = Some(vec![1.0]);
        for id in (0..=root).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if let Some(back) = &self.nodes[id].back {
                back(&g, &self.nodes, &mut grads);
            }
            if self.nodes[id].requires_grad {
                grads[id] = Some(g);
            }
        }
        for (id, slot) in grads.into_iter().enumerate() {
            if let Some(g) = slot {
                self.nodes[id].value.grad = Some(g);
            }
        }
        Ok(())
    }
}

/// Get-or-zero-init the gradient buffer of `id`.
pub(crate) fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}
