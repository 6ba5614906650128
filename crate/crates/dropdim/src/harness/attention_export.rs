//! `export-attention`: dump attention matrices for one example as CSV
//! heatmap tables (one per head, plus the head average).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::eval::load_run;
use crate::model::{make_batch, AttnCapture, Model, RegContext};
use crate::tensor::Tape;
use crate::tasks::{generate, Example, BOS, EOS, PAD, UNK};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AttentionExport {
    pub files: Vec<PathBuf>,
    pub heads: usize,
    /// (queries, keys) of the encoder self-attention tables.
    pub enc_shape: (usize, usize),
    /// (queries, keys) of the decoder cross-attention tables.
    pub cross_shape: (usize, usize),
}

fn token_label(t: u32) -> String {
    match t {
        PAD => "pad".to_string(),
        BOS => "bos".to_string(),
        EOS => "eos".to_string(),
        UNK => "unk".to_string(),
        other => other.to_string(),
    }
}

/// Shannon entropy of one attention row (nats); `0 ln 0 = 0`.
fn row_entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// One head's `[1, Tq, Tk]` matrix as a labeled CSV heatmap table.
fn heatmap_csv(attn: &Tensor, queries: &[String], keys: &[String]) -> Result<String> {
    let (b, tq, tk) = attn.dims3()?;
    if b != 1 || tq != queries.len() || tk != keys.len() {
        return Err(Error::index(format!(
            "attention table is {b}x{tq}x{tk}, labels are {}x{}",
            queries.len(),
            keys.len()
        )));
    }
    let mut out = String::from("q\\k");
    for k in keys {
        write!(out, ",{k}").expect("writing to a String cannot fail");
    }
    out.push_str(",entropy\n");
    let data = attn.data();
    for (q, label) in queries.iter().enumerate() {
        let row = &data[q * tk..(q + 1) * tk];
        write!(out, "{label}").expect("writing to a String cannot fail");
        for p in row {
            write!(out, ",{p}").expect("writing to a String cannot fail");
        }
        writeln!(out, ",{}", row_entropy(row)).expect("writing to a String cannot fail");
    }
    Ok(out)
}

/// Elementwise average of the per-head matrices (rows stay stochastic).
fn head_mean(heads: &[Tensor]) -> Result<Tensor> {
    let dims = heads[0].shape().to_vec();
    let mut acc = vec![0.0; heads[0].numel()];
    for h in heads {
        if h.shape() != dims.as_slice() {
            return Err(Error::index("attention heads disagree on shape".to_string()));
        }
        for (a, v) in acc.iter_mut().zip(h.data()) {
            *a += v;
        }
    }
    let scale = 1.0 / heads.len() as f64;
    for a in &mut acc {
        *a *= scale;
    }
    Tensor::from_vec(&dims, acc)
}

/// Run one example through the model at inference and write the last
/// encoder layer's self-attention and the last decoder layer's
/// cross-attention, one CSV per head plus head means.
pub fn export_for_example(
    model: &Model,
    example: &Example,
    out_dir: &Path,
) -> Result<AttentionExport> {
    let batch = make_batch(&[example], model.config.frame_dim)?;
    let mut tape = Tape::new();
    let mut ctx = RegContext::inference(&batch.example_ids);
    let mut capture = AttnCapture::default();
    model.forward(&mut tape, &batch, &mut ctx, Some(&mut capture))?;

    let enc_heads = capture
        .enc_self
        .last()
        .expect("a validated model has at least one encoder layer");
    let cross_heads = capture
        .dec_cross
        .last()
        .expect("a validated model has at least one decoder layer");

    // Key labels index the encoder sequence: source token ids for discrete
    // input, `f{2t}` for continuous input (the stride-2 frontend keeps
    // every other frame).
    let enc_len = model.encoded_len(batch.t_src);
    let src_labels: Vec<String> = if model.config.continuous_input {
        (0..enc_len).map(|t| format!("f{}", 2 * t)).collect()
    } else {
        batch.src_tokens[..enc_len].iter().map(|&t| token_label(t)).collect()
    };
    let tgt_labels: Vec<String> = batch.tgt_in.iter().map(|&t| token_label(t)).collect();

    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut write = |name: String, text: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, text)?;
        files.push(path);
        Ok(())
    };

    for (h, attn) in enc_heads.iter().enumerate() {
        write(
            format!("enc_self_head{h}.csv"),
            heatmap_csv(attn, &src_labels, &src_labels)?,
        )?;
    }
    write(
        "enc_self_mean.csv".to_string(),
        heatmap_csv(&head_mean(enc_heads)?, &src_labels, &src_labels)?,
    )?;
    for (h, attn) in cross_heads.iter().enumerate() {
        write(
            format!("cross_head{h}.csv"),
            heatmap_csv(attn, &tgt_labels, &src_labels)?,
        )?;
    }
    write(
        "cross_mean.csv".to_string(),
        heatmap_csv(&head_mean(cross_heads)?, &tgt_labels, &src_labels)?,
    )?;

    Ok(AttentionExport {
        files,
        heads: enc_heads.len(),
        enc_shape: (enc_len, enc_len),
        cross_shape: (batch.t_tgt, enc_len),
    })
}

pub fn cmd_export_attention(
    ckpt: &Path,
    split_name: &str,
    example_index: usize,
    out_dir: &Path,
) -> Result<AttentionExport> {
    let (config, model) = load_run(ckpt)?;
    let dataset = generate(&config.task, config.seed)?;
    let split = dataset.split(split_name)?;
    let example = split.get(example_index).ok_or_else(|| {
        Error::index(format!(
            "example {example_index} out of range for split `{split_name}` with {} examples",
            split.len()
        ))
    })?;
    export_for_example(&model, example, out_dir)
}
