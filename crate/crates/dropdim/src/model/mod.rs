//! Encoder–decoder transformer: configuration, parameters, attention,
//! residual-regularizer wiring, forward/decode, and checkpoints.

pub mod attention;
pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod params;
pub mod transformer;

pub use attention::{multi_head_attention, AttnWeights};
pub use blocks::{apply_residual_reg, identity_lookup, lookup_from_trace, MaskLookup, RegContext};
pub use config::{ModelConfig, LN_EPS, NEG_INF};
pub use params::{init_params, ParamSet};
pub use transformer::{
    make_batch, positional_encoding, teacher_forced_accuracy, train_context, AttnCapture, Batch,
    ForwardParams, Model,
};
