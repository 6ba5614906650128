//! Regularizer plumbing for residual sub-blocks.
//!
//! The model computes `y = x + sub_block(norm(x))` and hands `y` to
//! [`apply_residual_reg`] together with the sub-block's [`Location`].
//! In train mode, if the location's side passes the spec's part gate,
//! the configured regularizer transforms `y`; otherwise (and always in
//! inference mode) `y` is returned untouched.
//!
//! Dimension masks come from one of two sources: freshly sampled from
//! the context's rng (one independent mask per example, drawn in batch
//! order and recorded in the trace), or replayed from a lookup built out
//! of an earlier trace — the mechanism behind the bit-exact replay and
//! forced-full-keep checks.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::reg::{
    apply_dim_masks, apply_dropout, BernoulliReading, DimMask, Location, MaskTrace, Mode, RegKind,
    RegularizerSpec, Side,
};
use crate::rng::SeedRng;
use crate::tensor::{NodeId, Tape};

/// Replay source: `(location, example_id) -> mask`.
pub type MaskLookup = HashMap<(Location, u64), DimMask>;

/// Build a replay lookup from the trace rows of one optimizer step.
pub fn lookup_from_trace(trace: &MaskTrace, step: u64, dim: usize) -> MaskLookup {
    let mut map = MaskLookup::new();
    for r in &trace.records {
        if r.step != step {
            continue;
        }
        map.insert(
            (r.location, r.example_id),
            DimMask {
                variant: r.variant,
                dim,
                dropped: r.dropped.clone(),
                norm: r.norm,
            },
        );
    }
    map
}

/// A lookup that forces full-keep masks (used to neutralize one part of
/// the model while keeping the replay plumbing identical).
pub fn identity_lookup(
    locations: &[Location],
    example_ids: &[u64],
    dim: usize,
    variant: crate::reg::MaskVariant,
) -> MaskLookup {
    let mut map = MaskLookup::new();
    for &loc in locations {
        for &id in example_ids {
            map.insert((loc, id), DimMask::identity(variant, dim));
        }
    }
    map
}

/// Everything the forward pass needs to decide and record regularization.
pub struct RegContext<'a> {
    pub spec: RegularizerSpec,
    pub mode: Mode,
    /// Mask-lane rng; required in train mode unless every stochastic
    /// choice is replayed.
    pub rng: Option<&'a mut SeedRng>,
    /// When set, dimension masks are replayed from here instead of
    /// sampled; a missing entry is an error, never a silent identity.
    pub replay: Option<&'a MaskLookup>,
    /// When set (and not replaying), every applied dimension mask is
    /// recorded here.
    pub trace: Option<&'a mut MaskTrace>,
    /// Optimizer step stamped on trace rows.
    pub step: u64,
    /// Dataset ids of the batch rows, in batch order.
    pub example_ids: &'a [u64],
}

impl<'a> RegContext<'a> {
    /// Inference: every regularizer is a no-op; no rng, no trace.
    pub fn inference(example_ids: &'a [u64]) -> RegContext<'a> {
        RegContext {
            spec: RegularizerSpec::default(),
            mode: Mode::Inference,
            rng: None,
            replay: None,
            trace: None,
            step: 0,
            example_ids,
        }
    }

    /// Training with freshly sampled masks.
    pub fn train(
        spec: RegularizerSpec,
        rng: &'a mut SeedRng,
        example_ids: &'a [u64],
        step: u64,
    ) -> RegContext<'a> {
        RegContext {
            spec,
            mode: Mode::Train,
            rng: Some(rng),
            replay: None,
            trace: None,
            step,
            example_ids,
        }
    }

    pub fn with_trace(mut self, trace: &'a mut MaskTrace) -> RegContext<'a> {
        self.trace = Some(trace);
        self
    }

    pub fn rng_mut(&mut self) -> Result<&mut SeedRng> {
        self.rng.as_deref_mut().ok_or_else(|| {
            Error::param("rng", "this regularizer configuration needs an rng in train mode".to_string())
        })
    }

    /// Is the residual/attention regularizer live for this side?
    pub fn live(&self, side: Side) -> bool {
        self.mode == Mode::Train && self.spec.part.covers(side)
    }
}

/// Apply the configured residual-output regularizer to `y` (the residual
/// sum of one sub-block), honoring mode and part gating.
pub fn apply_residual_reg(
    tape: &mut Tape,
    y: NodeId,
    location: Location,
    ctx: &mut RegContext,
) -> Result<NodeId> {
    if !ctx.live(location.side) {
        return Ok(y);
    }
    match ctx.spec.kind {
        RegKind::None => Ok(y),
        RegKind::Dropout => {
            let p = ctx.spec.p;
            apply_dropout(tape, y, p, Mode::Train, ctx.rng_mut()?)
        }
        RegKind::DropdimRandom | RegKind::DropdimSpan => {
            let d = tape.value(y).last_dim();
            let mut masks = Vec::with_capacity(ctx.example_ids.len());
            if let Some(replay) = ctx.replay {
                for &id in ctx.example_ids {
                    let mask = replay.get(&(location, id)).cloned().ok_or_else(|| {
                        Error::InvalidData(format!(
                            "replay has no mask for example {} at {}",
                            id, location
                        ))
                    })?;
                    masks.push(mask);
                }
            } else {
                let kind = ctx.spec.kind;
                let (p, alpha) = (ctx.spec.p, ctx.spec.alpha);
                let batch = ctx.example_ids.len();
                let rng = ctx.rng_mut()?;
                for _ in 0..batch {
                    let mask = match kind {
                        RegKind::DropdimRandom => DimMask::sample_random(
                            d,
                            p,
                            BernoulliReading::DropProbability,
                            true,
                            rng,
                        )?,
                        RegKind::DropdimSpan => DimMask::sample_span(d, alpha, rng)?,
                        _ => unreachable!("outer match covers only dropdim kinds"),
                    };
                    masks.push(mask);
                }
                if let Some(trace) = ctx.trace.as_deref_mut() {
                    for (&id, mask) in ctx.example_ids.iter().zip(&masks) {
                        trace.record(ctx.step, id, location, mask);
                    }
                }
            }
            apply_dim_masks(tape, y, &masks, Mode::Train)
        }
    }
}
