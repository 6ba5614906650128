//! The encoder–decoder transformer.
//!
//! Pre-layernorm blocks; every residual sum passes through the
//! configured regularizer (see [`crate::model::blocks`]). Discrete
//! sources go through an embedding, continuous sources through a linear
//! projection with stride-2 subsampling; both add sinusoidal positions.
//! The target embedding is tied to the output projection.

use std::collections::HashMap;

use super::attention::{multi_head_attention, AttnWeights};
use super::blocks::{apply_residual_reg, RegContext};
use super::config::{ModelConfig, LN_EPS, NEG_INF};
use super::params::{init_params, ParamSet};
use crate::error::{Error, Result};
use crate::reg::{Location, MaskTrace, RegularizerSpec, Side, Site};
use crate::rng::{self, Lane, SeedRng};
use crate::tasks::{Example, BOS, EOS, PAD};
use crate::tensor::{NodeId, Tape, Tensor};

/// A padded batch ready for the model. Discrete tasks fill `src_tokens`;
/// continuous tasks fill `src_frames` (row-major `B x t_src x frame_dim`).
#[derive(Debug, Clone)]
pub struct Batch {
    pub example_ids: Vec<u64>,
    pub src_tokens: Vec<u32>,
    pub src_frames: Vec<f64>,
    /// Per-example source length: tokens for discrete input, frames for
    /// continuous input.
    pub src_lens: Vec<usize>,
    /// Padded source length (frames for continuous input).
    pub t_src: usize,
    /// Decoder input: `BOS` followed by the target without its final `EOS`.
    pub tgt_in: Vec<u32>,
    /// Teacher-forcing labels: the target (ends with `EOS`), `PAD`-padded.
    pub tgt_out: Vec<u32>,
    pub tgt_lens: Vec<usize>,
    pub t_tgt: usize,
    pub frame_dim: usize,
    pub size: usize,
}

/// Assemble a padded batch from examples (all discrete or all continuous).
pub fn make_batch(examples: &[&Example], frame_dim: usize) -> Result<Batch> {
    if examples.is_empty() {
        return Err(Error::param("examples", "empty batch".to_string()));
    }
    let continuous = examples[0].frames.is_some();
    let b = examples.len();
    let t_src = examples
        .iter()
        .map(|e| if continuous { e.n_frames } else { e.src.len() })
        .max()
        .expect("non-empty");
    let t_tgt = examples.iter().map(|e| e.tgt.len()).max().expect("non-empty");
    let mut batch = Batch {
        example_ids: Vec::with_capacity(b),
        src_tokens: Vec::new(),
        src_frames: Vec::new(),
        src_lens: Vec::with_capacity(b),
        t_src,
        tgt_in: Vec::with_capacity(b * t_tgt),
        tgt_out: Vec::with_capacity(b * t_tgt),
        tgt_lens: Vec::with_capacity(b),
        t_tgt,
        frame_dim,
        size: b,
    };
    for ex in examples {
        if ex.frames.is_some() != continuous {
            return Err(Error::param(
                "examples",
                "cannot mix discrete and continuous examples in one batch".to_string(),
            ));
        }
        batch.example_ids.push(ex.id);
        if continuous {
            let frames = ex.frames.as_ref().expect("continuous example");
            if frames.len() != ex.n_frames * frame_dim {
                return Err(Error::ShapeMismatch {
                    op: "make_batch",
                    lhs: vec![ex.n_frames, frame_dim],
                    rhs: vec![frames.len()],
                });
            }
            batch.src_frames.extend_from_slice(frames);
            batch
                .src_frames
                .extend(std::iter::repeat(0.0).take((t_src - ex.n_frames) * frame_dim));
            batch.src_lens.push(ex.n_frames);
        } else {
            if ex.src.is_empty() {
                return Err(Error::param("examples", "discrete example with empty source".to_string()));
            }
            batch.src_tokens.extend_from_slice(&ex.src);
            batch.src_tokens.extend(std::iter::repeat(PAD).take(t_src - ex.src.len()));
            batch.src_lens.push(ex.src.len());
        }
        if ex.tgt.is_empty() {
            return Err(Error::param("examples", "example with empty target".to_string()));
        }
        batch.tgt_in.push(BOS);
        batch.tgt_in.extend_from_slice(&ex.tgt[..ex.tgt.len() - 1]);
        batch.tgt_in.extend(std::iter::repeat(PAD).take(t_tgt - ex.tgt.len()));
        batch.tgt_out.extend_from_slice(&ex.tgt);
        batch.tgt_out.extend(std::iter::repeat(PAD).take(t_tgt - ex.tgt.len()));
        batch.tgt_lens.push(ex.tgt.len());
    }
    Ok(batch)
}

/// Captured intermediate activations from one forward pass.
#[derive(Debug, Default)]
pub struct AttnCapture {
    /// `[layer][head]` encoder self-attention matrices, each `[B, T', T']`.
    pub enc_self: Vec<Vec<Tensor>>,
    /// `[layer][head]` decoder cross-attention matrices, each `[B, T_tgt, T']`.
    pub dec_cross: Vec<Vec<Tensor>>,
    /// Post-regularizer residual outputs per sub-block location.
    pub residuals: Vec<(Location, Tensor)>,
}

/// Sinusoidal positional table, row-major `[t, d]`.
pub fn positional_encoding(t: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; t * d];
    for pos in 0..t {
        for i in 0..d {
            let exponent = 2.0 * (i / 2) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// Parameter leaves for one tape, by name.
struct ParamNodes {
    ids: HashMap<String, NodeId>,
}

impl ParamNodes {
    fn new(tape: &mut Tape, params: &ParamSet) -> ParamNodes {
        let mut ids = HashMap::new();
        for (name, tensor) in params.iter() {
            ids.insert(name.to_string(), tape.leaf(tensor.clone()));
        }
        ParamNodes { ids }
    }

    fn get(&self, name: &str) -> NodeId {
        *self.ids.get(name).unwrap_or_else(|| panic!("missing parameter node `{}`", name))
    }

    fn attn(&self, prefix: &str) -> AttnWeights {
        AttnWeights {
            wq: self.get(&format!("{}.wq", prefix)),
            wk: self.get(&format!("{}.wk", prefix)),
            wv: self.get(&format!("{}.wv", prefix)),
            wo: self.get(&format!("{}.wo", prefix)),
        }
    }
}

/// Node ids of every parameter leaf in one forward pass, in `ParamSet`
/// order — the hook the optimizer uses to read gradients back out.
#[derive(Debug)]
pub struct ForwardParams(Vec<(String, NodeId)>);

impl ForwardParams {
    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.0.iter().map(|(n, id)| (n.as_str(), *id))
    }
}

#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    /// Fresh model with seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let params = init_params(&config, &mut rng::lane(seed, Lane::Init));
        Ok(Model { config, params })
    }

    /// Rebuild from a checkpointed parameter set, verifying names and
    /// shapes against the configuration.
    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Model> {
        config.validate()?;
        let expected = init_params(&config, &mut rng::lane(0, Lane::Init));
        if expected.len() != params.len() {
            return Err(Error::InvalidData(format!(
                "checkpoint has {} parameters, configuration needs {}",
                params.len(),
                expected.len()
            )));
        }
        for (i, (name, tensor)) in expected.iter().enumerate() {
            let (got_name, got) = params.at(i);
            if got_name != name || got.shape() != tensor.shape() {
                return Err(Error::InvalidData(format!(
                    "checkpoint parameter {} is `{}` {:?}, expected `{}` {:?}",
                    i,
                    got_name,
                    got.shape(),
                    name,
                    tensor.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    /// Encoder sequence length for a source of `len` tokens/frames.
    pub fn encoded_len(&self, len: usize) -> usize {
        if self.config.continuous_input {
            len.div_ceil(2)
        } else {
            len
        }
    }

    /// Standalone continuous frontend: projection + stride-2
    /// subsampling + positions. Exposed for direct verification; the
    /// encoder uses the same computation.
    pub fn continuous_frontend(&self, tape: &mut Tape, frames: &[f64], b: usize, t: usize) -> Result<NodeId> {
        if !self.config.continuous_input {
            return Err(Error::config("model.continuous_input", "model has a discrete frontend"));
        }
        let f = self.config.frame_dim;
        if frames.len() != b * t * f {
            return Err(Error::ShapeMismatch {
                op: "continuous_frontend",
                lhs: vec![b, t, f],
                rhs: vec![frames.len()],
            });
        }
        let frames = tape.constant(Tensor::from_vec(&[b, t, f], frames.to_vec())?);
        let w = tape.leaf(self.params.get("frontend.weight")?.clone());
        let bias = tape.leaf(self.params.get("frontend.bias")?.clone());
        self.frontend_core(tape, frames, w, bias, b)
    }

    fn frontend_core(
        &self,
        tape: &mut Tape,
        frames: NodeId,
        weight: NodeId,
        bias: NodeId,
        b: usize,
    ) -> Result<NodeId> {
        let proj = tape.matmul(frames, weight)?;
        let proj = tape.add_bias(proj, bias)?;
        let sub = tape.stride_rows(proj, 2)?;
        let t_out = tape.value(sub).dims3()?.1;
        self.add_positions(tape, sub, b, t_out)
    }

    fn add_positions(&self, tape: &mut Tape, x: NodeId, b: usize, t: usize) -> Result<NodeId> {
        if t > self.config.max_seq_len {
            return Err(Error::config(
                "model.max_seq_len",
                format!("sequence length {} exceeds max_seq_len {}", t, self.config.max_seq_len),
            ));
        }
        let d = self.config.d_model;
        let table = positional_encoding(t, d);
        let mut tiled = Vec::with_capacity(b * t * d);
        for _ in 0..b {
            tiled.extend_from_slice(&table);
        }
        let pe = tape.constant(Tensor::from_vec(&[b, t, d], tiled)?);
        tape.add(x, pe)
    }

    fn pad_bias(tape: &mut Tape, b: usize, tq: usize, tk: usize, key_lens: &[usize]) -> Result<NodeId> {
        let mut bias = vec![0.0; b * tq * tk];
        for (bi, &len) in key_lens.iter().enumerate() {
            for qi in 0..tq {
                for kj in len..tk {
                    bias[(bi * tq + qi) * tk + kj] = NEG_INF;
                }
            }
        }
        Ok(tape.constant(Tensor::from_vec(&[b, tq, tk], bias)?))
    }

    fn causal_pad_bias(tape: &mut Tape, b: usize, t: usize, key_lens: &[usize]) -> Result<NodeId> {
        let mut bias = vec![0.0; b * t * t];
        for (bi, &len) in key_lens.iter().enumerate() {
            for qi in 0..t {
                for kj in 0..t {
                    if kj > qi || kj >= len {
                        bias[(bi * t + qi) * t + kj] = NEG_INF;
                    }
                }
            }
        }
        Ok(tape.constant(Tensor::from_vec(&[b, t, t], bias)?))
    }

    fn layernorm(&self, tape: &mut Tape, nodes: &ParamNodes, prefix: &str, x: NodeId) -> Result<NodeId> {
        let gain = nodes.get(&format!("{}.gain", prefix));
        let bias = nodes.get(&format!("{}.bias", prefix));
        tape.layernorm(x, gain, bias, LN_EPS)
    }

    fn ffn(&self, tape: &mut Tape, nodes: &ParamNodes, prefix: &str, x: NodeId) -> Result<NodeId> {
        let h = tape.matmul(x, nodes.get(&format!("{}.w1", prefix)))?;
        let h = tape.add_bias(h, nodes.get(&format!("{}.b1", prefix)))?;
        let h = tape.relu(h)?;
        let h = tape.matmul(h, nodes.get(&format!("{}.w2", prefix)))?;
        tape.add_bias(h, nodes.get(&format!("{}.b2", prefix)))
    }

    #[allow(clippy::too_many_arguments)]
    fn attn_sub_block(
        &self,
        tape: &mut Tape,
        nodes: &ParamNodes,
        x: NodeId,
        kv: Option<NodeId>,
        ln: &str,
        attn_prefix: &str,
        bias: NodeId,
        location: Location,
        ctx: &mut RegContext,
        capture: Option<&mut Vec<Tensor>>,
    ) -> Result<NodeId> {
        let normed = self.layernorm(tape, nodes, ln, x)?;
        let kv_in = kv.unwrap_or(normed);
        let weights = nodes.attn(attn_prefix);
        let attn = multi_head_attention(
            tape,
            normed,
            kv_in,
            &weights,
            self.config.heads,
            Some(bias),
            self.config.attention_dropout,
            location,
            ctx,
            capture,
        )?;
        let y = tape.add(x, attn)?;
        apply_residual_reg(tape, y, location, ctx)
    }

    fn ffn_sub_block(
        &self,
        tape: &mut Tape,
        nodes: &ParamNodes,
        x: NodeId,
        ln: &str,
        ffn_prefix: &str,
        location: Location,
        ctx: &mut RegContext,
    ) -> Result<NodeId> {
        let normed = self.layernorm(tape, nodes, ln, x)?;
        let f = self.ffn(tape, nodes, ffn_prefix, normed)?;
        let y = tape.add(x, f)?;
        apply_residual_reg(tape, y, location, ctx)
    }

    fn capture_residual(
        tape: &Tape,
        capture: &mut Option<&mut AttnCapture>,
        location: Location,
        h: NodeId,
    ) {
        if let Some(cap) = capture.as_deref_mut() {
            cap.residuals.push((location, tape.value(h).clone()));
        }
    }

    fn encode_with(
        &self,
        tape: &mut Tape,
        nodes: &ParamNodes,
        batch: &Batch,
        ctx: &mut RegContext,
        mut capture: Option<&mut AttnCapture>,
    ) -> Result<(NodeId, Vec<usize>)> {
        let b = batch.size;
        let x = if self.config.continuous_input {
            if batch.src_frames.len() != b * batch.t_src * self.config.frame_dim {
                return Err(Error::ShapeMismatch {
                    op: "encode",
                    lhs: vec![b, batch.t_src, self.config.frame_dim],
                    rhs: vec![batch.src_frames.len()],
                });
            }
            let frames = tape.constant(Tensor::from_vec(
                &[b, batch.t_src, self.config.frame_dim],
                batch.src_frames.clone(),
            )?);
            self.frontend_core(
                tape,
                frames,
                nodes.get("frontend.weight"),
                nodes.get("frontend.bias"),
                b,
            )?
        } else {
            let emb = tape.embedding(
                nodes.get("src_embed.weight"),
                &batch.src_tokens,
                &[b, batch.t_src],
            )?;
            // Undo the 1/sqrt(d) in the embedding init so token signal
            // stays comparable to the O(1) positional table.
            let emb = tape.scale(emb, (self.config.d_model as f64).sqrt())?;
            self.add_positions(tape, emb, b, batch.t_src)?
        };
        let enc_lens: Vec<usize> = batch.src_lens.iter().map(|&l| self.encoded_len(l)).collect();
        let t_enc = tape.value(x).dims3()?.1;
        let bias = Self::pad_bias(tape, b, t_enc, t_enc, &enc_lens)?;
        let mut x = x;
        for i in 0..self.config.enc_layers {
            let base = format!("encoder.layer{}", i);
            let loc_attn = Location::new(Side::Encoder, i, Site::SelfAttn);
            let mut head_cap: Option<Vec<Tensor>> = capture.as_ref().map(|_| Vec::new());
            x = self.attn_sub_block(
                tape,
                nodes,
                x,
                None,
                &format!("{}.ln1", base),
                &format!("{}.self_attn", base),
                bias,
                loc_attn,
                ctx,
                head_cap.as_mut(),
            )?;
            if let Some(cap) = capture.as_deref_mut() {
                cap.enc_self.push(head_cap.expect("capture requested"));
            }
            Self::capture_residual(tape, &mut capture, loc_attn, x);
            let loc_ffn = Location::new(Side::Encoder, i, Site::Ffn);
            x = self.ffn_sub_block(tape, nodes, x, &format!("{}.ln2", base), &format!("{}.ffn", base), loc_ffn, ctx)?;
            Self::capture_residual(tape, &mut capture, loc_ffn, x);
        }
        let out = self.layernorm(tape, nodes, "encoder.final_ln", x)?;
        Ok((out, enc_lens))
    }

    #[allow(clippy::too_many_arguments)]
    fn decode_with(
        &self,
        tape: &mut Tape,
        nodes: &ParamNodes,
        memory: NodeId,
        enc_lens: &[usize],
        tgt_in: &[u32],
        tgt_lens: &[usize],
        t_tgt: usize,
        ctx: &mut RegContext,
        mut capture: Option<&mut AttnCapture>,
    ) -> Result<NodeId> {
        let b = tgt_lens.len();
        let emb = tape.embedding(nodes.get("tgt_embed.weight"), tgt_in, &[b, t_tgt])?;
        let emb = tape.scale(emb, (self.config.d_model as f64).sqrt())?;
        let mut x = self.add_positions(tape, emb, b, t_tgt)?;
        let self_bias = Self::causal_pad_bias(tape, b, t_tgt, tgt_lens)?;
        let t_enc = tape.value(memory).dims3()?.1;
        let cross_bias = Self::pad_bias(tape, b, t_tgt, t_enc, enc_lens)?;
        for i in 0..self.config.dec_layers {
            let base = format!("decoder.layer{}", i);
            let loc_self = Location::new(Side::Decoder, i, Site::SelfAttn);
            x = self.attn_sub_block(
                tape,
                nodes,
                x,
                None,
                &format!("{}.ln1", base),
                &format!("{}.self_attn", base),
                self_bias,
                loc_self,
                ctx,
                None,
            )?;
            Self::capture_residual(tape, &mut capture, loc_self, x);

            let loc_cross = Location::new(Side::Decoder, i, Site::CrossAttn);
            let mut head_cap: Option<Vec<Tensor>> = capture.as_ref().map(|_| Vec::new());
            let normed = self.layernorm(tape, nodes, &format!("{}.ln2", base), x)?;
            let weights = nodes.attn(&format!("{}.cross_attn", base));
            let attn = multi_head_attention(
                tape,
                normed,
                memory,
                &weights,
                self.config.heads,
                Some(cross_bias),
                self.config.attention_dropout,
                loc_cross,
                ctx,
                head_cap.as_mut(),
            )?;
            let y = tape.add(x, attn)?;
            x = apply_residual_reg(tape, y, loc_cross, ctx)?;
            if let Some(cap) = capture.as_deref_mut() {
                cap.dec_cross.push(head_cap.expect("capture requested"));
            }
            Self::capture_residual(tape, &mut capture, loc_cross, x);

            let loc_ffn = Location::new(Side::Decoder, i, Site::Ffn);
            x = self.ffn_sub_block(tape, nodes, x, &format!("{}.ln3", base), &format!("{}.ffn", base), loc_ffn, ctx)?;
            Self::capture_residual(tape, &mut capture, loc_ffn, x);
        }
        let out = self.layernorm(tape, nodes, "decoder.final_ln", x)?;
        let proj = tape.transpose(nodes.get("tgt_embed.weight"))?;
        tape.matmul(out, proj)
    }

    /// Teacher-forced forward pass: logits `[B, T_tgt, tgt_vocab]`.
    /// Returns the logits node and the parameter leaves of this tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        ctx: &mut RegContext,
        mut capture: Option<&mut AttnCapture>,
    ) -> Result<(NodeId, ForwardParams)> {
        let nodes = ParamNodes::new(tape, &self.params);
        let (memory, enc_lens) = self.encode_with(tape, &nodes, batch, ctx, capture.as_deref_mut())?;
        let logits = self.decode_with(
            tape,
            &nodes,
            memory,
            &enc_lens,
            &batch.tgt_in,
            &batch.tgt_lens,
            batch.t_tgt,
            ctx,
            capture,
        )?;
        let mut out = Vec::with_capacity(self.params.len());
        for (name, _) in self.params.iter() {
            out.push((name.to_string(), nodes.get(name)));
        }
        Ok((logits, ForwardParams(out)))
    }

    /// Label-smoothed loss over the batch's non-pad target positions.
    pub fn loss(&self, tape: &mut Tape, logits: NodeId, batch: &Batch) -> Result<NodeId> {
        tape.cross_entropy_label_smoothed(logits, &batch.tgt_out, self.config.label_smoothing, PAD)
    }

    /// Greedy decoding. Regularizers are off (inference) unless `forced`
    /// supplies a spec and rng, in which case every forward pass runs in
    /// train mode with fresh stochastic masks — the test-time-drop
    /// protocol. Returns one token sequence per example, `EOS` excluded.
    pub fn greedy_decode(
        &self,
        batch: &Batch,
        max_len: usize,
        mut forced: Option<(&RegularizerSpec, &mut SeedRng)>,
    ) -> Result<Vec<Vec<u32>>> {
        let b = batch.size;
        // Encode once; the memory re-enters each step's tape as a constant.
        let mut tape = Tape::new();
        let nodes = ParamNodes::new(&mut tape, &self.params);
        let (memory_node, enc_lens) = {
            let mut ctx = match forced.as_mut() {
                None => RegContext::inference(&batch.example_ids),
                Some((spec, rng)) => RegContext::train(**spec, rng, &batch.example_ids, 0),
            };
            self.encode_with(&mut tape, &nodes, batch, &mut ctx, None)?
        };
        let memory = tape.value(memory_node).clone();
        drop(tape);

        let mut outputs: Vec<Vec<u32>> = vec![Vec::new(); b];
        let mut done = vec![false; b];
        for step in 0..max_len {
            let t = step + 1;
            let mut tgt_in = Vec::with_capacity(b * t);
            for seq in &outputs {
                tgt_in.push(BOS);
                tgt_in.extend_from_slice(seq);
                tgt_in.extend(std::iter::repeat(PAD).take(t - 1 - seq.len()));
            }
            let lens: Vec<usize> = outputs.iter().map(|s| s.len() + 1).collect();
            let mut tape = Tape::new();
            let nodes = ParamNodes::new(&mut tape, &self.params);
            let mem = tape.constant(memory.clone());
            let mut ctx = match forced.as_mut() {
                None => RegContext::inference(&batch.example_ids),
                Some((spec, rng)) => {
                    RegContext::train(**spec, rng, &batch.example_ids, step as u64)
                }
            };
            let logits =
                self.decode_with(&mut tape, &nodes, mem, &enc_lens, &tgt_in, &lens, t, &mut ctx, None)?;
            let data = tape.value(logits).data();
            let v = self.config.tgt_vocab;
            for bi in 0..b {
                if done[bi] {
                    continue;
                }
                let pos = lens[bi] - 1;
                let row = &data[(bi * t + pos) * v..(bi * t + pos + 1) * v];
                let next = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(i, _)| i as u32)
                    .expect("non-empty vocab");
                if next == EOS {
                    done[bi] = true;
                } else {
                    outputs[bi].push(next);
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(outputs)
    }

    /// Forward + loss in inference mode; returns the scalar loss value.
    pub fn eval_loss(&self, batch: &Batch) -> Result<f64> {
        let mut tape = Tape::new();
        let mut ctx = RegContext::inference(&batch.example_ids);
        let (logits, _) = self.forward(&mut tape, batch, &mut ctx, None)?;
        let loss = self.loss(&mut tape, logits, batch)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Teacher-forced token accuracy over non-pad positions (argmax of
    /// the logits against the labels), plus the loss. Inference mode.
    pub fn eval_teacher_forced(&self, batch: &Batch) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let mut ctx = RegContext::inference(&batch.example_ids);
        let (logits, _) = self.forward(&mut tape, batch, &mut ctx, None)?;
        let loss_node = self.loss(&mut tape, logits, batch)?;
        let loss = tape.value(loss_node).data()[0];
        let acc = teacher_forced_accuracy(tape.value(logits), &batch.tgt_out);
        Ok((loss, acc))
    }
}

/// Argmax-vs-label accuracy over non-pad positions.
pub fn teacher_forced_accuracy(logits: &Tensor, labels: &[u32]) -> f64 {
    let v = logits.last_dim();
    let data = logits.data();
    let mut hits = 0usize;
    let mut total = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        if label == PAD {
            continue;
        }
        total += 1;
        let row = &data[r * v..(r + 1) * v];
        let arg = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .expect("non-empty vocab");
        if arg == label as usize {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Convenience: a train-mode context that samples masks and records them.
pub fn train_context<'a>(
    spec: RegularizerSpec,
    rng: &'a mut SeedRng,
    example_ids: &'a [u64],
    step: u64,
    trace: Option<&'a mut MaskTrace>,
) -> RegContext<'a> {
    let mut ctx = RegContext::train(spec, rng, example_ids, step);
    ctx.trace = trace;
    ctx
}
