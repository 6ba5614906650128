//! `eval`: metrics for an existing checkpoint on a chosen split.

use std::path::Path;

use crate::error::Result;
use crate::harness::evalcore::{decode_budget, decoded_metric, teacher_forced_split};
use crate::harness::kv::RunConfig;
use crate::model::{checkpoint, Model};
use crate::tasks::generate;

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub split: String,
    pub examples: usize,
    pub loss: f64,
    pub teacher_accuracy: f64,
    pub metric_name: &'static str,
    pub metric_value: f64,
}

/// Load a checkpoint into a model plus the configuration it embeds.
pub fn load_run(ckpt: &Path) -> Result<(RunConfig, Model)> {
    let (text, params) = checkpoint::load(ckpt)?;
    let config = RunConfig::from_text(&text)?;
    let model = Model::from_parts(config.model_config()?, params)?;
    Ok((config, model))
}

pub fn cmd_eval(ckpt: &Path, split_name: &str) -> Result<EvalReport> {
    let (config, model) = load_run(ckpt)?;
    let dataset = generate(&config.task, config.seed)?;
    let split = dataset.split(split_name)?;
    let batch = config.optim.batch_size;
    let (loss, teacher_accuracy) = teacher_forced_split(&model, split, batch)?;
    let metric_value = decoded_metric(
        &model,
        split,
        config.task.kind,
        batch,
        decode_budget(config.task.len_max),
        None,
    )?;
    Ok(EvalReport {
        split: split_name.to_string(),
        examples: split.len(),
        loss,
        teacher_accuracy,
        metric_name: config.task.kind.metric_name(),
        metric_value,
    })
}
