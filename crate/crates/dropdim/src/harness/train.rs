//! `train`: the full seeded training loop.
//!
//! Writes four files into the run directory, all byte-deterministic
//! given the configuration (wall time goes to the returned outcome and
//! stdout only): `config.txt`, `records.csv`, `model.ckpt`, and — for
//! dropdim runs — `trace.csv` with every sampled mask.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::harness::evalcore::{decode_budget, decoded_metric, teacher_forced_split};
use crate::harness::kv::RunConfig;
use crate::harness::optim::Adam;
use crate::harness::records::RunRecord;
use crate::model::{make_batch, teacher_forced_accuracy, Model, RegContext};
use crate::reg::{MaskTrace, RegKind};
use crate::rng::{self, Lane};
use crate::tasks::{generate, Dataset, Example};
use crate::tensor::Tape;

/// Stream index (under [`rng::indexed`]) for the epoch shuffle.
pub(crate) const SHUFFLE_STREAM: u64 = 8;
/// Stream index for data-sweep subset selection.
pub(crate) const SUBSET_STREAM: u64 = 9;
/// Base stream index for test-time-drop mask seeds (one stream per seed).
pub(crate) const TESTTIME_STREAM: u64 = 16;

/// Everything a caller might want back from a finished run. The run
/// directory additionally holds the durable artifacts.
#[derive(Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub model: Model,
    pub final_train_loss: f64,
    pub dev_metric: f64,
    pub test_metric: f64,
    pub metric_name: &'static str,
    pub out_dir: PathBuf,
    pub wall_seconds: f64,
}

/// Generate the dataset from the config and train on it.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = generate(&config.task, config.seed)?;
    train_on(config, &dataset)
}

/// Train on an already-built dataset (the sweep commands pass subsets).
pub fn train_on(config: &RunConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let out_dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&out_dir)?;
    let canonical = config.canonical_text();
    fs::write(out_dir.join("config.txt"), &canonical)?;

    let mut model = Model::new(config.model_config()?, config.seed)?;
    let mut adam = Adam::new(&model.params, config.optim.lr, config.optim.warmup);
    let mut mask_rng = rng::lane(config.seed, Lane::Mask);
    let mut shuffle_rng = rng::indexed(config.seed, SHUFFLE_STREAM);
    let tracing = matches!(config.reg.kind, RegKind::DropdimRandom | RegKind::DropdimSpan);
    let mut trace = MaskTrace::new();
    let mut record = RunRecord::new(config.hash_hex());
    let metric_name = config.task.kind.metric_name();
    let batch_size = config.optim.batch_size;

    let mut step: u64 = 0;
    let mut final_train_loss = f64::INFINITY;
    let mut last_dev_loss = f64::INFINITY;
    for epoch in 0..config.optim.epochs {
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        let mut tokens = 0usize;
        for chunk in order.chunks(batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let batch = make_batch(&refs, model.config.frame_dim)?;
            let n: usize = batch.tgt_lens.iter().sum();
            let mut tape = Tape::new();
            let mut ctx = RegContext::train(config.reg, &mut mask_rng, &batch.example_ids, step);
            if tracing {
                ctx.trace = Some(&mut trace);
            }
            let (logits, fwd) = model.forward(&mut tape, &batch, &mut ctx, None)?;
            let loss = model.loss(&mut tape, logits, &batch)?;
            tape.backward(loss)?;
            loss_sum += tape.value(loss).data()[0] * n as f64;
            acc_sum += teacher_forced_accuracy(tape.value(logits), &batch.tgt_out) * n as f64;
            tokens += n;
            let grads: Vec<Option<Vec<f64>>> = fwd.iter().map(|(_, id)| tape.take_grad(id)).collect();
            adam.step(&mut model.params, &grads)?;
            step += 1;
        }
        let train_loss = loss_sum / tokens as f64;
        record.push(epoch, "train", train_loss, "token_accuracy", acc_sum / tokens as f64);
        let (dev_loss, dev_acc) = teacher_forced_split(&model, &dataset.dev, batch_size)?;
        record.push(epoch, "dev", dev_loss, "token_accuracy", dev_acc);
        final_train_loss = train_loss;
        last_dev_loss = dev_loss;
    }

    // Decoded task metrics on dev and test.
    let kind = config.task.kind;
    let max_len = decode_budget(config.task.len_max);
    let dev_metric = decoded_metric(&model, &dataset.dev, kind, batch_size, max_len, None)?;
    record.push(config.optim.epochs, "dev", last_dev_loss, metric_name, dev_metric);
    let (test_loss, _) = teacher_forced_split(&model, &dataset.test, batch_size)?;
    let test_metric = decoded_metric(&model, &dataset.test, kind, batch_size, max_len, None)?;
    record.push(config.optim.epochs, "test", test_loss, metric_name, test_metric);

    record.write_csv(&out_dir.join("records.csv"))?;
    if tracing {
        trace.write_csv(&out_dir.join("trace.csv"))?;
    }
    crate::model::checkpoint::save(&out_dir.join("model.ckpt"), &canonical, &model.params)?;

    Ok(TrainOutcome {
        record,
        model,
        final_train_loss,
        dev_metric,
        test_metric,
        metric_name,
        out_dir,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
