//! Transformer hyperparameters and the two standard presets.

use crate::error::{Error, Result};
use crate::reg::RegularizerSpec;

/// Layer-norm epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-5;

/// Additive attention-bias value for masked positions.
pub const NEG_INF: f64 = -1e9;

/// Hyperparameters of the encoder–decoder transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Feature width of continuous inputs (ignored for discrete tasks).
    pub frame_dim: usize,
    /// Continuous frontend (frames) instead of a source embedding.
    pub continuous_input: bool,
    /// Element dropout on attention probabilities (0.0 by default).
    pub attention_dropout: f64,
    /// Residual-output regularizer applied per Eq-style wiring.
    pub reg: RegularizerSpec,
    pub label_smoothing: f64,
    pub max_seq_len: usize,
}

impl ModelConfig {
    /// Desk-scale default: 2+2 layers, 4 heads, width 64, FFN 256.
    pub fn toy(src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            d_model: 64,
            ffn_dim: 256,
            src_vocab,
            tgt_vocab,
            frame_dim: 16,
            continuous_input: false,
            attention_dropout: 0.0,
            reg: RegularizerSpec::default(),
            label_smoothing: 0.1,
            max_seq_len: 64,
        }
    }

    /// Full-size shape (12+6 layers, width 256, FFN 2048). Used for shape
    /// and plumbing tests, not for desk-scale training.
    pub fn paper_shape(src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            enc_layers: 12,
            dec_layers: 6,
            heads: 4,
            d_model: 256,
            ffn_dim: 2048,
            max_seq_len: 128,
            ..ModelConfig::toy(src_vocab, tgt_vocab)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("model.enc_layers", self.enc_layers),
            ("model.dec_layers", self.dec_layers),
            ("model.heads", self.heads),
            ("model.d_model", self.d_model),
            ("model.ffn_dim", self.ffn_dim),
            ("model.src_vocab", self.src_vocab),
            ("model.tgt_vocab", self.tgt_vocab),
            ("model.max_seq_len", self.max_seq_len),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::config(
                "model.heads",
                format!("width {} is not divisible by {} heads", self.d_model, self.heads),
            ));
        }
        if self.continuous_input && self.frame_dim == 0 {
            return Err(Error::config("model.frame_dim", "must be >= 1 for continuous input"));
        }
        if !(0.0..1.0).contains(&self.attention_dropout) {
            return Err(Error::config(
                "model.attention_dropout",
                format!("must be in [0, 1), got {}", self.attention_dropout),
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config(
                "model.label_smoothing",
                format!("must be in [0, 1), got {}", self.label_smoothing),
            ));
        }
        self.reg.validate(self.d_model, self.heads)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_preset_shape() {
        let c = ModelConfig::toy(32, 32);
        assert!(c.validate().is_ok());
        assert_eq!((c.enc_layers, c.dec_layers, c.heads, c.d_model, c.ffn_dim), (2, 2, 4, 64, 256));
        assert_eq!(c.head_dim(), 16);
        assert_eq!(c.label_smoothing, 0.1);
        assert_eq!(c.attention_dropout, 0.0);
    }

    #[test]
    fn paper_shape_preset() {
        let c = ModelConfig::paper_shape(32, 32);
        assert!(c.validate().is_ok());
        assert_eq!((c.enc_layers, c.dec_layers, c.heads, c.d_model, c.ffn_dim), (12, 6, 4, 256, 2048));
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut c = ModelConfig::toy(32, 32);
        c.heads = 5;
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("divisible"));
    }

    #[test]
    fn zero_dims_rejected() {
        let mut c = ModelConfig::toy(32, 32);
        c.enc_layers = 0;
        assert!(c.validate().is_err());
    }
}
