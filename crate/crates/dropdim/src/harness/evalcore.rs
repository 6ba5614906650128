//! Split-level evaluation shared by train, eval, and test-time-drop.

use crate::error::Result;
use crate::model::{make_batch, teacher_forced_accuracy, Model, RegContext};
use crate::reg::RegularizerSpec;
use crate::rng::SeedRng;
use crate::tasks::metrics::{bleu, token_accuracy, wer};
use crate::tasks::{Example, TaskKind};
use crate::tensor::Tape;

/// Teacher-forced loss and token accuracy over a split, inference mode.
/// Both are weighted by each batch's non-pad token count, so the result
/// does not depend on how the split is chunked.
pub fn teacher_forced_split(model: &Model, split: &[Example], batch_size: usize) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut acc_sum = 0.0;
    let mut tokens = 0usize;
    for chunk in split.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = make_batch(&refs, model.config.frame_dim)?;
        let n: usize = batch.tgt_lens.iter().sum();
        let mut tape = Tape::new();
        let mut ctx = RegContext::inference(&batch.example_ids);
        let (logits, _) = model.forward(&mut tape, &batch, &mut ctx, None)?;
        let loss_node = model.loss(&mut tape, logits, &batch)?;
        loss_sum += tape.value(loss_node).data()[0] * n as f64;
        acc_sum += teacher_forced_accuracy(tape.value(logits), &batch.tgt_out) * n as f64;
        tokens += n;
    }
    Ok((loss_sum / tokens as f64, acc_sum / tokens as f64))
}

/// Greedy-decode a split and return its task metric. `forced` turns the
/// given regularizer on during decoding (fresh masks from the rng) — the
/// test-time-drop protocol; `None` is ordinary clean decoding.
pub fn decoded_metric(
    model: &Model,
    split: &[Example],
    kind: TaskKind,
    batch_size: usize,
    max_len: usize,
    mut forced: Option<(&RegularizerSpec, &mut SeedRng)>,
) -> Result<f64> {
    let mut hyps: Vec<Vec<u32>> = Vec::with_capacity(split.len());
    for chunk in split.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = make_batch(&refs, model.config.frame_dim)?;
        let out = match forced.as_mut() {
            None => model.greedy_decode(&batch, max_len, None)?,
            Some((spec, rng)) => model.greedy_decode(&batch, max_len, Some((spec, rng)))?,
        };
        hyps.extend(out);
    }
    corpus_metric(kind, &hyps, split)
}

/// Aggregate hypothesis sequences against a split's references using the
/// task's metric: mean token accuracy (copy/reverse), corpus BLEU
/// (toy_mt), or length-weighted corpus WER (toy_asr).
pub fn corpus_metric(kind: TaskKind, hyps: &[Vec<u32>], split: &[Example]) -> Result<f64> {
    match kind {
        TaskKind::Copy | TaskKind::Reverse => {
            let mut sum = 0.0;
            for (hyp, ex) in hyps.iter().zip(split) {
                sum += token_accuracy(hyp, ex.tgt_content())?;
            }
            Ok(sum / split.len() as f64)
        }
        TaskKind::ToyMt => {
            let refs: Vec<Vec<u32>> = split.iter().map(|e| e.tgt_content().to_vec()).collect();
            bleu(hyps, &refs)
        }
        TaskKind::ToyAsr => {
            let mut weighted = 0.0;
            let mut total = 0usize;
            for (hyp, ex) in hyps.iter().zip(split) {
                let r = ex.tgt_content();
                weighted += wer(hyp, r)? * r.len() as f64;
                total += r.len();
            }
            Ok(weighted / total as f64)
        }
    }
}

/// Decode-length budget for a task: longest target content plus slack
/// for overgeneration before the EOS cap.
pub fn decode_budget(len_max: usize) -> usize {
    len_max + 5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tasks::{generate, TaskSpec};

    #[test]
    fn corpus_metric_matches_task_conventions() {
        let spec = TaskSpec {
            n_train: 3,
            n_dev: 2,
            n_test: 2,
            ..TaskSpec::new(TaskKind::Copy)
        };
        let ds = generate(&spec, 5).unwrap();
        let perfect: Vec<Vec<u32>> = ds.dev.iter().map(|e| e.tgt_content().to_vec()).collect();
        assert_eq!(corpus_metric(TaskKind::Copy, &perfect, &ds.dev).unwrap(), 1.0);
        assert_eq!(corpus_metric(TaskKind::ToyMt, &perfect, &ds.dev).unwrap(), 100.0);
        assert_eq!(corpus_metric(TaskKind::ToyAsr, &perfect, &ds.dev).unwrap(), 0.0);
    }

    #[test]
    fn teacher_forced_split_is_chunking_invariant() {
        let spec = TaskSpec {
            n_train: 3,
            n_dev : 5,
            n_test: 2,
            ..TaskSpec::new(TaskKind::Copy)
        };
        let ds = generate(&spec, 9).unwrap();
        let model = Model::new(ModelConfig::toy(32, 32), 1).unwrap();
        let (loss_a, acc_a) = teacher_forced_split(&model, &ds.dev, 2).unwrap();
        let (loss_b, acc_b) = teacher_forced_split(&model, &ds.dev, 5).unwrap();
        assert!((loss_a - loss_b).abs() < 1e-9, "{} vs {}", loss_a, loss_b);
        assert!((acc_a - acc_b).abs() < 1e-9);
    }
}
