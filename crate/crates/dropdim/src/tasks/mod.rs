//! Synthetic sequence-to-sequence tasks and their metrics.
//!
//! Four desk-scale stand-ins for real speech/translation corpora:
//!
//! * `copy` — target repeats the source;
//! * `reverse` — target is the source reversed;
//! * `toy_mt` — source tokens pass through a fixed random bijective
//!   dictionary and adjacent positions are swapped, a small "translation"
//!   with both lexical and reordering structure;
//! * `toy_asr` — continuous input: each transcript token emits 1–3
//!   frames of its codebook prototype plus Gaussian noise, and the model
//!   must recover the transcript.
//!
//! Token ids 0–3 are reserved (`PAD`, `BOS`, `EOS`, `UNK`); content
//! tokens start at 4. Targets always end with `EOS`. Generation is
//! bit-reproducible from `(spec, seed)` and the train/dev/test splits
//! are disjoint by construction (duplicate sources are rejected and
//! redrawn).

pub mod io;
pub mod metrics;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, SeedRng};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
/// Number of reserved token ids.
pub const SPECIALS: u32 = 4;

/// Feature dimension of the synthetic acoustic frames.
pub const FRAME_DIM: usize = 16;

/// How many frames one transcript token may emit.
pub const FRAMES_PER_TOKEN: std::ops::RangeInclusive<usize> = 1..=3;

/// Extra noisy copies of each training example when augmentation is on.
pub const AUGMENT_COPIES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    ToyMt,
    ToyAsr,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::ToyMt => "toy_mt",
            TaskKind::ToyAsr => "toy_asr",
        }
    }

    /// Does the model consume continuous frames rather than token ids?
    pub fn continuous_input(&self) -> bool {
        matches!(self, TaskKind::ToyAsr)
    }

    /// The headline evaluation metric for this task.
    pub fn metric_name(&self) -> &'static str {
        match self {
            TaskKind::Copy | TaskKind::Reverse => "token_accuracy",
            TaskKind::ToyMt => "bleu",
            TaskKind::ToyAsr => "wer",
        }
    }

    /// Is a larger metric value better?
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, TaskKind::ToyAsr)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "toy_mt" => Ok(TaskKind::ToyMt),
            "toy_asr" => Ok(TaskKind::ToyAsr),
            other => Err(Error::config(
                "task.kind",
                format!("unknown task `{}` (expected copy|reverse|toy_mt|toy_asr)", other),
            )),
        }
    }
}

/// Everything needed to synthesize a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Total vocabulary size including the four reserved ids.
    pub vocab: usize,
    /// Source-length range (content tokens), inclusive.
    pub len_min: usize,
    pub len_max: usize,
    /// Gaussian frame-noise level for `toy_asr`.
    pub noise: f64,
    /// Frames-per-token range for `toy_asr`, inclusive.
    pub frames_min: usize,
    pub frames_max: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Add noise-resampled copies of each training example (`toy_asr` only).
    pub augment: bool,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            vocab: 32,
            len_min: 8,
            len_max: 12,
            noise: 0.1,
            frames_min: *FRAMES_PER_TOKEN.start(),
            frames_max: *FRAMES_PER_TOKEN.end(),
            n_train: 200,
            n_dev: 50,
            n_test: 50,
            augment: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < SPECIALS as usize + 1 {
            return Err(Error::config(
                "task.vocab",
                format!(
                    "vocabulary must be at least {} (4 reserved symbols plus content), got {}",
                    SPECIALS + 1,
                    self.vocab
                ),
            ));
        }
        if self.len_min == 0 || self.len_min > self.len_max {
            return Err(Error::config(
                "task.len_min",
                format!("need 1 <= len_min <= len_max, got {}..{}", self.len_min, self.len_max),
            ));
        }
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return Err(Error::config("task.n_train", "split sizes must be > 0".to_string()));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::config("task.noise", format!("must be >= 0, got {}", self.noise)));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(Error::config(
                "task.frames_min",
                format!(
                    "need 1 <= frames_min <= frames_max, got {}..{}",
                    self.frames_min, self.frames_max
                ),
            ));
        }
        if self.augment && !self.kind.continuous_input() {
            return Err(Error::config(
                "task.augment",
                "noise augmentation only applies to continuous-input tasks (toy_asr)".to_string(),
            ));
        }
        Ok(())
    }

    fn content_range(&self) -> std::ops::Range<u32> {
        SPECIALS..self.vocab as u32
    }
}

/// One parallel pair. Discrete tasks carry `src` tokens; `toy_asr`
/// carries `frames` (row-major `n_frames x FRAME_DIM`) and an empty
/// `src`. Targets end with [`EOS`].
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub frames: Option<Vec<f64>>,
    pub n_frames: usize,
}

impl Example {
    /// Transcript / content tokens of the target (without the final EOS).
    pub fn tgt_content(&self) -> &[u32] {
        &self.tgt[..self.tgt.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub seed: u64,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[Example]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::param("split", format!("unknown split `{}`", other))),
        }
    }
}

/// The fixed bijective dictionary used by `toy_mt`: a seeded permutation
/// of the content-token range. `dict[i]` is the target token for content
/// token `SPECIALS + i`.
pub fn mt_dictionary(vocab: usize, seed: u64) -> Vec<u32> {
    let mut dict: Vec<u32> = (SPECIALS..vocab as u32).collect();
    let mut r = rng::indexed(seed, 5);
    dict.shuffle(&mut r);
    dict
}

/// The fixed `toy_asr` codebook: one `FRAME_DIM`-vector prototype per
/// vocabulary entry (reserved ids included so indexing is direct),
/// standard normal entries.
pub fn asr_codebook(vocab: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::indexed(seed, 6);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..vocab * FRAME_DIM).map(|_| normal.sample(&mut r)).collect()
}

fn apply_mt_rule(src: &[u32], dict: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = src.iter().map(|&t| dict[(t - SPECIALS) as usize]).collect();
    let mut i = 0;
    while i + 1 < out.len() {
        out.swap(i, i + 1);
        i += 2;
    }
    out
}

fn emit_frames(
    tokens: &[u32],
    codebook: &[f64],
    noise: f64,
    frames_per_token: std::ops::RangeInclusive<usize>,
    rng: &mut SeedRng,
) -> Result<(Vec<f64>, usize)> {
    let normal = if noise > 0.0 {
        Some(Normal::new(0.0, noise).map_err(|e| Error::param("noise", e.to_string()))?)
    } else {
        None
    };
    let mut frames = Vec::new();
    let mut n_frames = 0;
    for &t in tokens {
        let reps = rng.gen_range(frames_per_token.clone());
        let proto = &codebook[t as usize * FRAME_DIM..(t as usize + 1) * FRAME_DIM];
        for _ in 0..reps {
            for &p in proto {
                let eps = match &normal {
                    Some(n) => n.sample(rng),
                    None => 0.0,
                };
                frames.push(p + eps);
            }
            n_frames += 1;
        }
    }
    Ok((frames, n_frames))
}

/// How many times a duplicate source is redrawn before generation gives
/// up (guards against specs whose sequence space is too small for the
/// requested number of distinct examples).
const REJECTION_LIMIT: usize = 10_000;

/// Generate the three splits. Sources (transcripts for `toy_asr`) are
/// unique across the entire dataset, so the splits are disjoint.
pub fn generate(spec: &TaskSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let dict = match spec.kind {
        TaskKind::ToyMt => Some(mt_dictionary(spec.vocab, seed)),
        _ => None,
    };
    let codebook = match spec.kind {
        TaskKind::ToyAsr => Some(asr_codebook(spec.vocab, seed)),
        _ => None,
    };
    let mut data_rng = rng::lane(seed, rng::Lane::Data);
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut next_id: u64 = 0;
    let total = spec.n_train + spec.n_dev + spec.n_test;
    let mut make_split = |n: usize| -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut attempts = 0;
            let tokens = loop {
                let len = data_rng.gen_range(spec.len_min..=spec.len_max);
                let tokens: Vec<u32> =
                    (0..len).map(|_| data_rng.gen_range(spec.content_range())).collect();
                if seen.insert(tokens.clone()) {
                    break tokens;
                }
                attempts += 1;
                if attempts >= REJECTION_LIMIT {
                    return Err(Error::config(
                        "task.n_train",
                        format!(
                            "could not draw {} distinct sequences from vocab {} and lengths {}..{}",
                            total, spec.vocab, spec.len_min, spec.len_max
                        ),
                    ));
                }
            };
            let id = next_id;
            next_id += 1;
            let example = match spec.kind {
                TaskKind::Copy => {
                    let mut tgt = tokens.clone();
                    tgt.push(EOS);
                    Example { id, src: tokens, tgt, frames: None, n_frames: 0 }
                }
                TaskKind::Reverse => {
                    let mut tgt: Vec<u32> = tokens.iter().rev().cloned().collect();
                    tgt.push(EOS);
                    Example { id, src: tokens, tgt, frames: None, n_frames: 0 }
                }
                TaskKind::ToyMt => {
                    let mut tgt = apply_mt_rule(&tokens, dict.as_ref().expect("toy_mt dict"));
                    tgt.push(EOS);
                    Example { id, src: tokens, tgt, frames: None, n_frames: 0 }
                }
                TaskKind::ToyAsr => {
                    let (frames, n_frames) = emit_frames(
                        &tokens,
                        codebook.as_ref().expect("toy_asr codebook"),
                        spec.noise,
                        spec.frames_min..=spec.frames_max,
                        &mut data_rng,
                    )?;
                    let mut tgt = tokens;
                    tgt.push(EOS);
                    Example { id, src: Vec::new(), tgt, frames: Some(frames), n_frames }
                }
            };
            out.push(example);
        }
        Ok(out)
    };
    let mut train = make_split(spec.n_train)?;
    let dev = make_split(spec.n_dev)?;
    let test = make_split(spec.n_test)?;

    if spec.augment {
        let codebook = codebook.as_ref().expect("augment implies toy_asr");
        let mut aug_rng = rng::indexed(seed, 7);
        let mut extra = Vec::with_capacity(train.len() * AUGMENT_COPIES);
        for ex in &train {
            for _ in 0..AUGMENT_COPIES {
                let (frames, n_frames) = emit_frames(
                    ex.tgt_content(),
                    codebook,
                    spec.noise,
                    spec.frames_min..=spec.frames_max,
                    &mut aug_rng,
                )?;
                extra.push(Example {
                    id: next_id,
                    src: Vec::new(),
                    tgt: ex.tgt.clone(),
                    frames: Some(frames),
                    n_frames,
                });
                next_id += 1;
            }
        }
        train.extend(extra);
    }

    Ok(Dataset { spec: spec.clone(), seed, train, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            n_train: 40,
            n_dev: 10,
            n_test: 10,
            ..TaskSpec::new(kind)
        }
    }

    #[test]
    fn copy_and_reverse_targets() {
        let ds = generate(&spec(TaskKind::Copy), 1).unwrap();
        for ex in &ds.train {
            let mut want = ex.src.clone();
            want.push(EOS);
            assert_eq!(ex.tgt, want);
        }
        let ds = generate(&spec(TaskKind::Reverse), 1).unwrap();
        for ex in &ds.train {
            let mut want: Vec<u32> = ex.src.iter().rev().cloned().collect();
            want.push(EOS);
            assert_eq!(ex.tgt, want);
        }
    }

    #[test]
    fn targets_end_with_eos_and_sources_use_content_tokens() {
        for kind in [TaskKind::Copy, TaskKind::Reverse, TaskKind::ToyMt, TaskKind::ToyAsr] {
            let ds = generate(&spec(kind), 3).unwrap();
            for ex in ds.train.iter().chain(&ds.dev).chain(&ds.test) {
                assert_eq!(*ex.tgt.last().unwrap(), EOS);
                for &t in &ex.src {
                    assert!(t >= SPECIALS && (t as usize) < ds.spec.vocab);
                }
            }
        }
    }

    #[test]
    fn mt_dictionary_is_bijective_over_full_vocab() {
        let vocab = 32;
        let dict = mt_dictionary(vocab, 9);
        let mut inverse = vec![None; vocab];
        for (i, &t) in dict.iter().enumerate() {
            assert!(t >= SPECIALS && (t as usize) < vocab);
            assert!(inverse[t as usize].is_none(), "dictionary not injective");
            inverse[t as usize] = Some(SPECIALS + i as u32);
        }
        // Every content token is hit: decode(encode(x)) = x exhaustively.
        for x in SPECIALS..vocab as u32 {
            let enc = dict[(x - SPECIALS) as usize];
            assert_eq!(inverse[enc as usize], Some(x));
        }
    }

    #[test]
    fn mt_rule_swaps_adjacent_positions() {
        let dict: Vec<u32> = (SPECIALS..32).collect(); // identity dictionary
        assert_eq!(apply_mt_rule(&[4, 5, 6, 7, 8], &dict), vec![5, 4, 7, 6, 8]);
        assert_eq!(apply_mt_rule(&[4], &dict), vec![4]);
    }

    #[test]
    fn splits_are_disjoint() {
        let ds = generate(&spec(TaskKind::Copy), 11).unwrap();
        let key = |e: &Example| e.src.clone();
        let train: HashSet<_> = ds.train.iter().map(key).collect();
        let dev: HashSet<_> = ds.dev.iter().map(key).collect();
        let test: HashSet<_> = ds.test.iter().map(key).collect();
        assert_eq!(train.len(), ds.train.len());
        assert!(train.is_disjoint(&dev));
        assert!(train.is_disjoint(&test));
        assert!(dev.is_disjoint(&test));
    }

    #[test]
    fn generation_is_bit_reproducible() {
        for kind in [TaskKind::ToyMt, TaskKind::ToyAsr] {
            let a = generate(&spec(kind), 17).unwrap();
            let b = generate(&spec(kind), 17).unwrap();
            assert_eq!(a, b);
            let c = generate(&spec(kind), 18).unwrap();
            assert_ne!(a.train, c.train, "different seeds must differ");
        }
    }

    #[test]
    fn asr_frames_count_and_noise() {
        let mut s = spec(TaskKind::ToyAsr);
        s.noise = 0.0;
        let ds = generate(&s, 5).unwrap();
        let codebook = asr_codebook(s.vocab, 5);
        for ex in &ds.train {
            let frames = ex.frames.as_ref().unwrap();
            assert_eq!(frames.len(), ex.n_frames * FRAME_DIM);
            let content = ex.tgt_content();
            assert!(ex.n_frames >= content.len() && ex.n_frames <= 3 * content.len());
            // With zero noise every frame is exactly a codebook prototype.
            for frame in frames.chunks(FRAME_DIM) {
                let matches_proto = (0..s.vocab).any(|t| {
                    let proto = &codebook[t * FRAME_DIM..(t + 1) * FRAME_DIM];
                    proto.iter().zip(frame).all(|(a, b)| a == b)
                });
                assert!(matches_proto);
            }
        }
    }

    #[test]
    fn augmentation_triples_training_split() {
        let mut s = spec(TaskKind::ToyAsr);
        s.augment = true;
        let ds = generate(&s, 5).unwrap();
        assert_eq!(ds.train.len(), s.n_train * (1 + AUGMENT_COPIES));
        assert_eq!(ds.dev.len(), s.n_dev);
        // Copies share transcripts with originals but carry fresh frames.
        let orig = &ds.train[0];
        let copy = ds.train.iter().skip(s.n_train).find(|e| e.tgt == orig.tgt).unwrap();
        assert_ne!(orig.frames, copy.frames);
        // Ids remain unique.
        let ids: HashSet<u64> = ds.train.iter().map(|e| e.id).collect();
        assert_eq!(ids.len(), ds.train.len());
    }

    #[test]
    fn augmentation_rejected_for_discrete_tasks() {
        let mut s = spec(TaskKind::Copy);
        s.augment = true;
        assert!(generate(&s, 1).is_err());
    }

    #[test]
    fn tiny_vocab_is_rejected() {
        let mut s = spec(TaskKind::Copy);
        s.vocab = 4;
        assert!(s.validate().is_err());
        s.vocab = 3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn impossible_uniqueness_is_an_error() {
        // One content token, length 1: only one distinct sequence exists.
        let s = TaskSpec {
            vocab: 5,
            len_min: 1,
            len_max: 1,
            noise: 0.0,
            n_train: 2,
            n_dev: 1,
            n_test: 1,
            ..TaskSpec::new(TaskKind::Copy)
        };
        let err = generate(&s, 1).unwrap_err();
        assert!(err.to_string().contains("distinct"));
    }
}
