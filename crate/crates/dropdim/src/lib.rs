//! Desk-scale laboratory for structured dropout on transformer residual
//! sub-blocks.
//!
//! The crate wires four layers together:
//!
//! * [`tensor`] — a dense `f64` tensor with reverse-mode autodiff on a
//!   per-step tape, enough to train the toy models and to verify every
//!   operator against finite differences.
//! * [`reg`] — the structured regularizers: embedding-dimension masking
//!   (random and span variants), element dropout, attention-weight
//!   dropping, and head dropping, each with exact train/inference
//!   semantics and a replayable mask trace.
//! * [`model`] — a minimal encoder–decoder transformer whose residual
//!   sub-block outputs pass through the configured regularizer, with
//!   part-level selection (encoder / decoder / all).
//! * [`tasks`] + [`harness`] — synthetic sequence tasks, WER/BLEU
//!   metrics, and a seeded experiment runner (train / eval / sweeps /
//!   test-time drop / attention export / mask audit) with CSV outputs.
//!
//! Everything is deterministic given a seed: rerunning a configuration
//! reproduces records, traces, and checkpoints byte for byte.

pub mod error;
pub mod harness;
pub mod model;
pub mod parallel;
pub mod reg;
pub mod rng;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
