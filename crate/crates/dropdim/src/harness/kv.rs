//! Run configuration: a flat `key=value` text format, one key per line.
//!
//! Every run is fully described by a [`RunConfig`]; its canonical text
//! lists every key with its concrete value, so a written `config.txt`
//! reproduces the run without reference to defaults or presets. Unknown
//! keys are errors. `#` starts a comment line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::reg::RegularizerSpec;
use crate::tasks::{TaskKind, TaskSpec, FRAME_DIM};

/// Model-size preset: `toy` for desk-scale runs, `paper-shape` for the
/// full-size layer/width layout (shape tests only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Toy,
    PaperShape,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::PaperShape => "paper-shape",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "paper-shape" => Ok(Preset::PaperShape),
            other => Err(Error::config(
                "model.preset",
                format!("unknown preset `{}` (expected toy|paper-shape)", other),
            )),
        }
    }
}

/// Adam hyperparameters and the training budget.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    /// Peak step size (reached at `warmup` steps).
    pub lr: f64,
    /// Warmup steps of the inverse-square-root schedule.
    pub warmup: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> OptimConfig {
        OptimConfig {
            lr: 3e-3,
            // Desk-scale runs see a few hundred optimizer steps; the
            // warmup must end well inside that budget.
            warmup: 100,
            epochs: 30,
            batch_size: 16,
        }
    }
}

/// Everything that determines one run. The canonical text form mirrors
/// these fields exactly, flat keys, one per line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub task: TaskSpec,
    pub preset: Preset,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    pub attention_dropout: f64,
    pub label_smoothing: f64,
    pub max_seq_len: usize,
    pub reg: RegularizerSpec,
    pub optim: OptimConfig,
}

impl RunConfig {
    pub fn new(kind: TaskKind) -> RunConfig {
        let mut config = RunConfig {
            seed: 42,
            out_dir: "runs/run".to_string(),
            task: TaskSpec::new(kind),
            preset: Preset::Toy,
            enc_layers: 0,
            dec_layers: 0,
            heads: 0,
            d_model: 0,
            ffn_dim: 0,
            attention_dropout: 0.0,
            label_smoothing: 0.0,
            max_seq_len: 0,
            reg: RegularizerSpec::default(),
            optim: OptimConfig::default(),
        };
        config.apply_preset(Preset::Toy);
        config
    }

    /// Reset the model-shape section to a preset's values.
    pub fn apply_preset(&mut self, preset: Preset) {
        let base = match preset {
            Preset::Toy => ModelConfig::toy(self.task.vocab, self.task.vocab),
            Preset::PaperShape => ModelConfig::paper_shape(self.task.vocab, self.task.vocab),
        };
        self.preset = preset;
        self.enc_layers = base.enc_layers;
        self.dec_layers = base.dec_layers;
        self.heads = base.heads;
        self.d_model = base.d_model;
        self.ffn_dim = base.ffn_dim;
        self.attention_dropout = base.attention_dropout;
        self.label_smoothing = base.label_smoothing;
        self.max_seq_len = base.max_seq_len;
    }

    /// Materialize the model configuration (vocabulary and input type
    /// come from the task).
    pub fn model_config(&self) -> Result<ModelConfig> {
        let continuous = self.task.kind.continuous_input();
        let config = ModelConfig {
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            heads: self.heads,
            d_model: self.d_model,
            ffn_dim: self.ffn_dim,
            src_vocab: self.task.vocab,
            tgt_vocab: self.task.vocab,
            frame_dim: FRAME_DIM,
            continuous_input: continuous,
            attention_dropout: self.attention_dropout,
            reg: self.reg,
            label_smoothing: self.label_smoothing,
            max_seq_len: self.max_seq_len,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.model_config()?;
        if !self.optim.lr.is_finite() || self.optim.lr <= 0.0 {
            return Err(Error::config("optim.lr", format!("must be > 0, got {}", self.optim.lr)));
        }
        if self.optim.warmup == 0 {
            return Err(Error::config("optim.warmup", "must be >= 1"));
        }
        if self.optim.epochs == 0 {
            return Err(Error::config("optim.epochs", "must be >= 1"));
        }
        if self.optim.batch_size == 0 {
            return Err(Error::config("optim.batch_size", "must be >= 1"));
        }
        if self.out_dir.is_empty() {
            return Err(Error::config("out_dir", "must not be empty"));
        }
        Ok(())
    }

    /// Set one field by its flat key. Used for both config files and
    /// command-line overrides. `model.preset` resets the whole model
    /// section, so apply it before other `model.*` keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            "task.kind" => self.task.kind = value.parse()?,
            "task.vocab" => self.task.vocab = parse(key, value)?,
            "task.len_min" => self.task.len_min = parse(key, value)?,
            "task.len_max" => self.task.len_max = parse(key, value)?,
            "task.noise" => self.task.noise = parse(key, value)?,
            "task.frames_min" => self.task.frames_min = parse(key, value)?,
            "task.frames_max" => self.task.frames_max = parse(key, value)?,
            "task.n_train" => self.task.n_train = parse(key, value)?,
            "task.n_dev" => self.task.n_dev = parse(key, value)?,
            "task.n_test" => self.task.n_test = parse(key, value)?,
            "task.augment" => self.task.augment = parse_bool(key, value)?,
            "model.preset" => self.apply_preset(value.parse()?),
            "model.enc_layers" => self.enc_layers = parse(key, value)?,
            "model.dec_layers" => self.dec_layers = parse(key, value)?,
            "model.heads" => self.heads = parse(key, value)?,
            "model.d_model" => self.d_model = parse(key, value)?,
            "model.ffn_dim" => self.ffn_dim = parse(key, value)?,
            "model.attention_dropout" => self.attention_dropout = parse(key, value)?,
            "model.label_smoothing" => self.label_smoothing = parse(key, value)?,
            "model.max_seq_len" => self.max_seq_len = parse(key, value)?,
            "reg.kind" => self.reg.kind = value.parse()?,
            "reg.p" => self.reg.p = parse(key, value)?,
            "reg.alpha" => self.reg.alpha = parse(key, value)?,
            "reg.part" => self.reg.part = value.parse()?,
            "reg.attn_kind" => self.reg.attn = value.parse()?,
            "reg.attn_p" => self.reg.attn_p = parse(key, value)?,
            "optim.lr" => self.optim.lr = parse(key, value)?,
            "optim.warmup" => self.optim.warmup = parse(key, value)?,
            "optim.epochs" => self.optim.epochs = parse(key, value)?,
            "optim.batch_size" => self.optim.batch_size = parse(key, value)?,
            other => {
                return Err(Error::config(
                    "config",
                    format!("unknown configuration key `{}`", other),
                ))
            }
        }
        Ok(())
    }

    /// Parse a full config text. Validates at the end.
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let map = parse_kv(text)?;
        let kind = match map.get("task.kind") {
            Some(v) => v.parse()?,
            None => TaskKind::Copy,
        };
        let mut config = RunConfig::new(kind);
        // The preset resets the model section, so it must win the
        // ordering race against explicit model.* keys.
        if let Some(preset) = map.get("model.preset") {
            config.apply_preset(preset.parse()?);
        }
        for (key, value) in &map {
            if key == "model.preset" {
                continue;
            }
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Canonical, fully explicit text form. Fixed key order; floats in
    /// shortest round-trip notation.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{}={}", k, v);
        };
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.clone());
        put("task.kind", self.task.kind.as_str().to_string());
        put("task.vocab", self.task.vocab.to_string());
        put("task.len_min", self.task.len_min.to_string());
        put("task.len_max", self.task.len_max.to_string());
        put("task.noise", self.task.noise.to_string());
        put("task.frames_min", self.task.frames_min.to_string());
        put("task.frames_max", self.task.frames_max.to_string());
        put("task.n_train", self.task.n_train.to_string());
        put("task.n_dev", self.task.n_dev.to_string());
        put("task.n_test", self.task.n_test.to_string());
        put("task.augment", self.task.augment.to_string());
        put("model.preset", self.preset.as_str().to_string());
        put("model.enc_layers", self.enc_layers.to_string());
        put("model.dec_layers", self.dec_layers.to_string());
        put("model.heads", self.heads.to_string());
        put("model.d_model", self.d_model.to_string());
        put("model.ffn_dim", self.ffn_dim.to_string());
        put("model.attention_dropout", self.attention_dropout.to_string());
        put("model.label_smoothing", self.label_smoothing.to_string());
        put("model.max_seq_len", self.max_seq_len.to_string());
        put("reg.kind", self.reg.kind.as_str().to_string());
        put("reg.p", self.reg.p.to_string());
        put("reg.alpha", self.reg.alpha.to_string());
        put("reg.part", self.reg.part.as_str().to_string());
        put("reg.attn_kind", self.reg.attn.as_str().to_string());
        put("reg.attn_p", self.reg.attn_p.to_string());
        put("optim.lr", self.optim.lr.to_string());
        put("optim.warmup", self.optim.warmup.to_string());
        put("optim.epochs", self.optim.epochs.to_string());
        put("optim.batch_size", self.optim.batch_size.to_string());
        s
    }

    /// SHA-256 over the canonical text minus the `out_dir` line,
    /// hex-encoded: the hash identifies the experiment, not where its
    /// files happen to land.
    pub fn hash_hex(&self) -> String {
        let text: String = self
            .canonical_text()
            .lines()
            .filter(|l| !l.starts_with("out_dir="))
            .map(|l| format!("{}\n", l))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::config(
            "config",
            format!("key `{}`: cannot parse value `{}`", key, value),
        )
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::config(
            "config",
            format!("key `{}`: expected true|false, got `{}`", key, other),
        )),
    }
}

/// Parse flat `key=value` lines into a map. Duplicate keys, missing
/// `=`, and empty keys are errors naming the line number.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config("config", format!("line {}: expected key=value, got `{}`", lineno + 1, line))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::config("config", format!("line {}: empty key", lineno + 1)));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::config(
                "config",
                format!("line {}: duplicate key `{}`", lineno + 1, key),
            ));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reg::RegKind;

    #[test]
    fn canonical_text_roundtrips() {
        let mut config = RunConfig::new(TaskKind::ToyMt);
        config.seed = 7;
        config.reg.kind = RegKind::DropdimSpan;
        config.reg.alpha = 12;
        config.optim.lr = 0.0015;
        let text = config.canonical_text();
        let back = RunConfig::from_text(&text).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.canonical_text(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_text("task.kindd=copy\n").unwrap_err();
        assert!(err.to_string().contains("unknown configuration key"), "{}", err);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = RunConfig::from_text("seed=1\nnot a kv line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{}", err);
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let err = RunConfig::from_text("seed=1\nseed=2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{}", err);
    }

    #[test]
    fn preset_applies_before_overrides_regardless_of_order() {
        // d_model appears before model.preset alphabetically and in the
        // text; the explicit value must still win.
        let text = "model.d_model=32\nmodel.preset=paper-shape\n";
        let config = RunConfig::from_text(text).unwrap();
        assert_eq!(config.d_model, 32);
        assert_eq!(config.enc_layers, 12, "other fields keep preset values");
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let config = RunConfig::from_text("# a comment\n\nseed=9\n").unwrap();
        assert_eq!(config.seed, 9);
    }

    #[test]
    fn hash_tracks_content_but_not_location() {
        let a = RunConfig::new(TaskKind::Copy);
        let mut b = a.clone();
        assert_eq!(a.hash_hex(), b.hash_hex());
        b.out_dir = "somewhere/else".to_string();
        assert_eq!(a.hash_hex(), b.hash_hex(), "output location is not experiment identity");
        b.seed = 43;
        assert_ne!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex().len(), 64);
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = RunConfig::from_text("optim.lr=fast\n").unwrap_err();
        assert!(err.to_string().contains("optim.lr"), "{}", err);
        let err = RunConfig::from_text("task.augment=yes\n").unwrap_err();
        assert!(err.to_string().contains("true|false"), "{}", err);
    }

    #[test]
    fn validation_names_bad_fields() {
        let mut config = RunConfig::new(TaskKind::Copy);
        config.optim.epochs = 0;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("optim.epochs"), "{}", err);
        let mut config = RunConfig::new(TaskKind::Copy);
        config.heads = 3; // 64 % 3 != 0
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("divisible"), "{}", err);
    }
}
