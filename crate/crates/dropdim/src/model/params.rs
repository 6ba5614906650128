//! Named parameter storage.
//!
//! Parameters live in a flat, ordered list of `(name, Tensor)` pairs.
//! The order is the construction order and is part of the determinism
//! contract: initialization draws from the rng in this order, optimizer
//! state is indexed by it, and checkpoints serialize it.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {}",
            name
        );
        self.names.push(name);
        self.tensors.push(tensor.with_grad());
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index_of(name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::InvalidData(format!("unknown parameter `{}`", name)))
    }

    pub fn at(&self, index: usize) -> (&str, &Tensor) {
        (&self.names[index], &self.tensors[index])
    }

    pub fn at_mut(&mut self, index: usize) -> (&str, &mut Tensor) {
        (&self.names[index], &mut self.tensors[index])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet::new()
    }
}

fn linear_init(rng: &mut SeedRng, fan_in: usize, shape: &[usize]) -> Tensor {
    Tensor::randn(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

fn push_attention(params: &mut ParamSet, prefix: &str, d: usize, rng: &mut SeedRng) {
    for w in ["wq", "wk", "wv", "wo"] {
        params.push(format!("{}.{}", prefix, w), linear_init(rng, d, &[d, d]));
    }
}

fn push_layernorm(params: &mut ParamSet, prefix: &str, d: usize) {
    params.push(format!("{}.gain", prefix), Tensor::full(&[d], 1.0));
    params.push(format!("{}.bias", prefix), Tensor::zeros(&[d]));
}

fn push_ffn(params: &mut ParamSet, prefix: &str, d: usize, ffn: usize, rng: &mut SeedRng) {
    params.push(format!("{}.w1", prefix), linear_init(rng, d, &[d, ffn]));
    params.push(format!("{}.b1", prefix), Tensor::zeros(&[ffn]));
    params.push(format!("{}.w2", prefix), linear_init(rng, ffn, &[ffn, d]));
    params.push(format!("{}.b2", prefix), Tensor::zeros(&[d]));
}

/// Build and initialize every parameter of the model described by
/// `config`, drawing weights from `rng` in a fixed order. The target
/// embedding doubles as the output projection (weight tying).
pub fn init_params(config: &ModelConfig, rng: &mut SeedRng) -> ParamSet {
    let d = config.d_model;
    let mut params = ParamSet::new();
    if config.continuous_input {
        params.push(
            "frontend.weight",
            linear_init(rng, config.frame_dim, &[config.frame_dim, d]),
        );
        params.push("frontend.bias", Tensor::zeros(&[d]));
    }
    // Embeddings are drawn at std 1/sqrt(d) and scaled by sqrt(d) where
    // they are used, so the tied output projection produces
    // unit-variance logits against layer-normed decoder output.
    let emb_std = 1.0 / (d as f64).sqrt();
    if !config.continuous_input {
        params.push(
            "src_embed.weight",
            Tensor::randn(&[config.src_vocab, d], emb_std, rng),
        );
    }
    params.push(
        "tgt_embed.weight",
        Tensor::randn(&[config.tgt_vocab, d], emb_std, rng),
    );
    for i in 0..config.enc_layers {
        let base = format!("encoder.layer{}", i);
        push_layernorm(&mut params, &format!("{}.ln1", base), d);
        push_attention(&mut params, &format!("{}.self_attn", base), d, rng);
        push_layernorm(&mut params, &format!("{}.ln2", base), d);
        push_ffn(&mut params, &format!("{}.ffn", base), d, config.ffn_dim, rng);
    }
    push_layernorm(&mut params, "encoder.final_ln", d);
    for i in 0..config.dec_layers {
        let base = format!("decoder.layer{}", i);
        push_layernorm(&mut params, &format!("{}.ln1", base), d);
        push_attention(&mut params, &format!("{}.self_attn", base), d, rng);
        push_layernorm(&mut params, &format!("{}.ln2", base), d);
        push_attention(&mut params, &format!("{}.cross_attn", base), d, rng);
        push_layernorm(&mut params, &format!("{}.ln3", base), d);
        push_ffn(&mut params, &format!("{}.ffn", base), d, config.ffn_dim, rng);
    }
    push_layernorm(&mut params, "decoder.final_ln", d);
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Lane};

    #[test]
    fn init_is_seeded_and_ordered() {
        let c = ModelConfig::toy(32, 32);
        let a = init_params(&c, &mut rng::lane(1, Lane::Init));
        let b = init_params(&c, &mut rng::lane(1, Lane::Init));
        assert_eq!(a, b);
        let other = init_params(&c, &mut rng::lane(2, Lane::Init));
        assert_ne!(a, other);
    }

    #[test]
    fn continuous_config_swaps_embedding_for_frontend() {
        let mut c = ModelConfig::toy(32, 32);
        c.continuous_input = true;
        let p = init_params(&c, &mut rng::lane(1, Lane::Init));
        assert!(p.get("frontend.weight").is_ok());
        assert!(p.get("frontend.bias").is_ok());
        assert!(p.get("src_embed.weight").is_err());
        assert_eq!(p.get("frontend.weight").unwrap().shape(), &[16, 64]);
    }

    #[test]
    fn expected_names_exist() {
        let c = ModelConfig::toy(32, 32);
        let p = init_params(&c, &mut rng::lane(1, Lane::Init));
        for name in [
            "src_embed.weight",
            "tgt_embed.weight",
            "encoder.layer0.self_attn.wq",
            "encoder.layer1.ffn.w2",
            "encoder.final_ln.gain",
            "decoder.layer0.cross_attn.wo",
            "decoder.layer1.ln3.bias",
            "decoder.final_ln.bias",
        ] {
            assert!(p.get(name).is_ok(), "missing {}", name);
        }
        // All parameters require gradients.
        assert!(p.iter().all(|(_, t)| t.requires_grad));
    }
}
