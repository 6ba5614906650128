//! Scaled dot-product multi-head attention with optional
//! attention-internal regularizers.
//!
//! Heads are computed as column slices of shared Q/K/V projections, so
//! every intermediate stays rank-3. Train-mode stochastic choices
//! consume the context rng in a fixed order: first the per-example head
//! masks (when head dropping is on), then per head the attention-dropout
//! mask followed by the attention-weight drop mask.

use crate::error::{Error, Result};
use crate::model::blocks::RegContext;
use crate::reg::{
    apply_attention_drop, apply_dropout, apply_head_scale, AttnRegKind, HeadMask, Location, Mode,
};
use crate::tensor::{NodeId, Tape, Tensor};

/// Projection weights of one attention block, as tape nodes.
pub struct AttnWeights {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
}

/// Multi-head attention. `q_in` is `[B, Tq, D]`, `kv_in` is `[B, Tk, D]`,
/// `bias` (if set) is an additive `[B, Tq, Tk]` mask applied to the
/// scaled scores before the softmax. When `capture` is set, each head's
/// final attention matrix is cloned into it.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention(
    tape: &mut Tape,
    q_in: NodeId,
    kv_in: NodeId,
    w: &AttnWeights,
    heads: usize,
    bias: Option<NodeId>,
    attention_dropout: f64,
    location: Location,
    ctx: &mut RegContext,
    mut capture: Option<&mut Vec<Tensor>>,
) -> Result<NodeId> {
    let d = tape.value(q_in).last_dim();
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(
            "model.heads",
            format!("width {} is not divisible by {} heads", d, heads),
        ));
    }
    let dh = d / heads;
    let q = tape.matmul(q_in, w.wq)?;
    let k = tape.matmul(kv_in, w.wk)?;
    let v = tape.matmul(kv_in, w.wv)?;

    let gated = ctx.live(location.side);
    let head_masks: Option<Vec<HeadMask>> = if gated && ctx.spec.attn == AttnRegKind::DropHead {
        let p = ctx.spec.attn_p;
        let batch = ctx.example_ids.len();
        let rng = ctx.rng_mut()?;
        let mut masks = Vec::with_capacity(batch);
        for _ in 0..batch {
            masks.push(HeadMask::sample(heads, p, rng)?);
        }
        Some(masks)
    } else {
        None
    };

    let scale = 1.0 / (dh as f64).sqrt();
    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let scores = tape.bmm_nt(qh, kh)?;
        let scaled = tape.scale(scores, scale)?;
        let biased = match bias {
            Some(b) => tape.add(scaled, b)?,
            None => scaled,
        };
        let mut probs = tape.softmax_rows(biased)?;
        if attention_dropout > 0.0 && ctx.mode == Mode::Train {
            probs = apply_dropout(tape, probs, attention_dropout, Mode::Train, ctx.rng_mut()?)?;
        }
        if gated && ctx.spec.attn == AttnRegKind::DropAttention {
            let p = ctx.spec.attn_p;
            probs = apply_attention_drop(tape, probs, p, Mode::Train, ctx.rng_mut()?)?;
        }
        if let Some(cap) = capture.as_deref_mut() {
            cap.push(tape.value(probs).clone());
        }
        let mut head_ctx = tape.matmul(probs, vh)?;
        if let Some(masks) = &head_masks {
            head_ctx = apply_head_scale(tape, head_ctx, h, masks, Mode::Train)?;
        }
        head_outputs.push(head_ctx);
    }
    let merged = tape.concat_cols(&head_outputs)?;
    tape.matmul(merged, w.wo)
}
