//! Tape-level application of the regularizers.
//!
//! Every function here takes a [`Mode`] and returns the input node
//! *unchanged* in inference mode — not an identity op, the same node id —
//! so the inference path is a no-op by construction.
//!
//! Masks enter the graph as constant multiplier tensors combined with a
//! single elementwise `mul`; constants receive no gradient, so dropped
//! entries block the backward signal exactly as they block the forward
//! one.

use rand::Rng;

use super::{DimMask, HeadMask, Mode};
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{NodeId, Tape, Tensor};

/// Apply per-example dimension masks to a sub-block output.
///
/// `x` is `[T, D]` with exactly one mask, or `[B, T, D]` with one mask
/// per batch row. Dropped columns are zeroed across all time steps and
/// the survivors are scaled by each mask's `norm`.
pub fn apply_dim_masks(tape: &mut Tape, x: NodeId, masks: &[DimMask], mode: Mode) -> Result<NodeId> {
    if mode == Mode::Inference {
        return Ok(x);
    }
    let t = tape.value(x);
    let d = t.last_dim();
    let (batch, rows_per_example) = match t.rank() {
        2 => (1, t.leading_rows()),
        3 => {
            let (b, tt, _) = t.dims3()?;
            (b, tt)
        }
        _ => {
            return Err(Error::param(
                "x",
                format!("dimension masks need rank 2 or 3, got {:?}", t.shape()),
            ))
        }
    };
    if masks.len() != batch {
        return Err(Error::param(
            "masks",
            format!("{} masks for a batch of {}", masks.len(), batch),
        ));
    }
    let mut mult = Vec::with_capacity(batch * rows_per_example * d);
    for mask in masks {
        if mask.dim != d {
            return Err(Error::param(
                "masks",
                format!("mask width {} does not match activation width {}", mask.dim, d),
            ));
        }
        let cols = mask.column_multiplier();
        for _ in 0..rows_per_example {
            mult.extend_from_slice(&cols);
        }
    }
    let m = tape.constant(Tensor::from_vec(t.shape(), mult)?);
    tape.mul(x, m)
}

/// Inverted element dropout: each entry is zeroed independently with
/// probability `p` and the survivors are scaled by `1 / (1 - p)`.
pub fn apply_dropout(tape: &mut Tape, x: NodeId, p: f64, mode: Mode, rng: &mut SeedRng) -> Result<NodeId> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param("p", format!("must be in [0, 1), got {}", p)));
    }
    if mode == Mode::Inference {
        return Ok(x);
    }
    let t = tape.value(x);
    let inv = 1.0 / (1.0 - p);
    let mult: Vec<f64> = (0..t.numel())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { inv })
        .collect();
    let m = tape.constant(Tensor::from_vec(t.shape(), mult)?);
    tape.mul(x, m)
}

/// Attention-weight dropping: zero each attention weight independently
/// with probability `p`, then renormalize every row to sum to one. A row
/// whose weights are all dropped falls back to the uniform distribution.
pub fn apply_attention_drop(
    tape: &mut Tape,
    probs: NodeId,
    p: f64,
    mode: Mode,
    rng: &mut SeedRng,
) -> Result<NodeId> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param("p", format!("must be in [0, 1), got {}", p)));
    }
    if mode == Mode::Inference {
        return Ok(probs);
    }
    let t = tape.value(probs);
    let mult: Vec<f64> = (0..t.numel())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 })
        .collect();
    let m = tape.constant(Tensor::from_vec(t.shape(), mult)?);
    let masked = tape.mul(probs, m)?;
    tape.row_renorm_uniform(masked)
}

/// Scale one head's output `[B, T, d_head]` by each example's head
/// decision: zero if this head is dropped for that example, otherwise
/// the example's `heads / kept` factor.
pub fn apply_head_scale(
    tape: &mut Tape,
    head_out: NodeId,
    head: usize,
    masks: &[HeadMask],
    mode: Mode,
) -> Result<NodeId> {
    if mode == Mode::Inference {
        return Ok(head_out);
    }
    let t = tape.value(head_out);
    let (b, rows, d) = t.dims3()?;
    if masks.len() != b {
        return Err(Error::param(
            "masks",
            format!("{} head masks for a batch of {}", masks.len(), b),
        ));
    }
    let mut mult = Vec::with_capacity(b * rows * d);
    for mask in masks {
        let factor = if mask.keeps(head) { mask.norm } else { 0.0 };
        mult.extend(std::iter::repeat(factor).take(rows * d));
    }
    let m = tape.constant(Tensor::from_vec(t.shape(), mult)?);
    tape.mul(head_out, m)
}
