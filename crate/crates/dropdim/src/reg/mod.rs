//! Structured-dropout regularizers for residual sub-blocks.
//!
//! The centerpiece is the *dimension mask* ([`DimMask`]): a training-time
//! transform that zeroes whole embedding dimensions of a sub-block output
//! (every time step loses the same columns) and rescales the survivors so
//! the expected activation is preserved. Two samplers are provided:
//!
//! * **random** — each dimension is dropped independently with
//!   probability `p`;
//! * **span** — a contiguous run of dimensions is dropped, with the run
//!   length drawn uniformly from `{0, …, alpha}` and the start drawn
//!   uniformly from the positions where the run fits.
//!
//! Alongside it live the baseline regularizers used for comparison:
//! plain element dropout, attention-weight dropping (with row
//! renormalization), and whole-head dropping. All of them share one
//! contract: **in inference mode they are exact no-ops** — the input
//! node is returned unchanged, bit for bit.

pub mod apply;
pub mod audit;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedRng;

pub use apply::{apply_attention_drop, apply_dim_masks, apply_dropout, apply_head_scale};
pub use trace::{Location, MaskRecord, MaskTrace, Side, Site};

/// How many times an all-dropped (or, for heads, none-kept) draw is
/// redrawn before the sampler gives up with an error.
pub const RESAMPLE_LIMIT: usize = 100;

/// Whether a regularizer is live. Inference is a strict no-op for every
/// regularizer in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// How the Bernoulli parameter of the random sampler is read. The
/// default treats `p` as the probability of *dropping* a dimension; the
/// alternative reads it as the probability of keeping one. Both are kept
/// selectable at the sampler level so the two conventions can be
/// compared directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BernoulliReading {
    #[default]
    DropProbability,
    KeepProbability,
}

/// Residual-output regularizer family selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegKind {
    #[default]
    None,
    Dropout,
    DropdimRandom,
    DropdimSpan,
}

impl RegKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::Dropout => "dropout",
            RegKind::DropdimRandom => "dropdim-random",
            RegKind::DropdimSpan => "dropdim-span",
        }
    }
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegKind::None),
            "dropout" => Ok(RegKind::Dropout),
            "dropdim-random" => Ok(RegKind::DropdimRandom),
            "dropdim-span" => Ok(RegKind::DropdimSpan),
            other => Err(Error::config(
                "reg.kind",
                format!(
                    "unknown kind `{}` (expected none|dropout|dropdim-random|dropdim-span)",
                    other
                ),
            )),
        }
    }
}

/// Attention-internal regularizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttnRegKind {
    #[default]
    None,
    DropAttention,
    DropHead,
}

impl AttnRegKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttnRegKind::None => "none",
            AttnRegKind::DropAttention => "dropattention",
            AttnRegKind::DropHead => "drophead",
        }
    }
}

impl fmt::Display for AttnRegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttnRegKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttnRegKind::None),
            "dropattention" => Ok(AttnRegKind::DropAttention),
            "drophead" => Ok(AttnRegKind::DropHead),
            other => Err(Error::config(
                "reg.attn_kind",
                format!("unknown kind `{}` (expected none|dropattention|drophead)", other),
            )),
        }
    }
}

/// Which half of the encoder–decoder stack a regularizer touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Part {
    Encoder,
    Decoder,
    #[default]
    All,
}

impl Part {
    pub fn as_str(&self) -> &'static str {
        match self {
            Part::Encoder => "encoder",
            Part::Decoder => "decoder",
            Part::All => "all",
        }
    }

    /// Does this gate admit locations on the given side?
    pub fn covers(&self, side: Side) -> bool {
        match self {
            Part::All => true,
            Part::Encoder => side == Side::Encoder,
            Part::Decoder => side == Side::Decoder,
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Part {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Part::Encoder),
            "decoder" => Ok(Part::Decoder),
            "all" => Ok(Part::All),
            other => Err(Error::config(
                "reg.part",
                format!("unknown part `{}` (expected encoder|decoder|all)", other),
            )),
        }
    }
}

/// Full regularization recipe for one run: the residual-output family
/// with its strength, an optional attention-internal family, and a part
/// gate restricting where both apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    /// Drop probability for `dropout` / `dropdim-random`.
    pub p: f64,
    /// Inclusive span-length cap for `dropdim-span`.
    pub alpha: usize,
    pub part: Part,
    pub attn: AttnRegKind,
    /// Drop probability for the attention-internal regularizer.
    pub attn_p: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec {
            kind: RegKind::None,
            p: 0.0,
            alpha: 0,
            part: Part::All,
            attn: AttnRegKind::None,
            attn_p: 0.0,
        }
    }
}

impl RegularizerSpec {
    /// Check ranges against a model width `d` and head count `h`.
    pub fn validate(&self, d: usize, h: usize) -> Result<()> {
        check_drop_probability("reg.p", self.p)?;
        check_drop_probability("reg.attn_p", self.attn_p)?;
        if self.kind == RegKind::DropdimSpan && self.alpha >= d {
            return Err(Error::config(
                "reg.alpha",
                format!("span cap {} must be below the model width {}", self.alpha, d),
            ));
        }
        if self.attn == AttnRegKind::DropHead && h == 0 {
            return Err(Error::config("model.heads", "head count must be >= 1"));
        }
        Ok(())
    }
}

fn check_drop_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(name, format!("must be in [0, 1), got {}", p)));
    }
    Ok(())
}

/// Which sampler produced a dimension mask. Recorded in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskVariant {
    Random,
    Span,
}

impl MaskVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskVariant::Random => "random",
            MaskVariant::Span => "span",
        }
    }
}

impl fmt::Display for MaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskVariant::Random),
            "span" => Ok(MaskVariant::Span),
            other => Err(Error::InvalidData(format!("unknown mask variant `{}`", other))),
        }
    }
}

/// One sampled dimension mask over a width-`dim` activation: the sorted
/// list of dropped column indices plus the survivor rescaling factor
/// `dim / kept` (so the masked activation keeps its expected scale).
#[derive(Debug, Clone, PartialEq)]
pub struct DimMask {
    pub variant: MaskVariant,
    pub dim: usize,
    /// Strictly increasing column indices, each `< dim`.
    pub dropped: Vec<usize>,
    /// Rescaling factor applied to surviving columns.
    pub norm: f64,
}

impl DimMask {
    /// A mask that drops nothing.
    pub fn identity(variant: MaskVariant, dim: usize) -> DimMask {
        DimMask {
            variant,
            dim,
            dropped: Vec::new(),
            norm: 1.0,
        }
    }

    pub fn kept(&self) -> usize {
        self.dim - self.dropped.len()
    }

    /// The rescale the mask *should* carry given its drop count:
    /// `dim / kept`, or 1.0 for the degenerate everything-dropped mask
    /// (nothing survives to be rescaled).
    pub fn expected_norm(dim: usize, kept: usize) -> f64 {
        if kept == 0 {
            1.0
        } else {
            dim as f64 / kept as f64
        }
    }

    /// Independent Bernoulli drops per dimension. An all-dropped draw is
    /// redrawn (up to [`RESAMPLE_LIMIT`] times) when `resample` is set;
    /// with `resample` off the degenerate mask is allowed through, which
    /// keeps the sampler exactly unbiased for Monte-Carlo checks.
    pub fn sample_random(
        dim: usize,
        p: f64,
        reading: BernoulliReading,
        resample: bool,
        rng: &mut SeedRng,
    ) -> Result<DimMask> {
        if dim == 0 {
            return Err(Error::param("dim", "mask width must be >= 1".to_string()));
        }
        let p_drop = match reading {
            BernoulliReading::DropProbability => p,
            BernoulliReading::KeepProbability => 1.0 - p,
        };
        if !(0.0..1.0).contains(&p_drop) {
            return Err(Error::param(
                "p",
                format!("effective drop probability must be in [0, 1), got {}", p_drop),
            ));
        }
        let attempts = if resample { RESAMPLE_LIMIT } else { 1 };
        for _ in 0..attempts {
            let dropped: Vec<usize> = (0..dim).filter(|_| rng.gen::<f64>() < p_drop).collect();
            if resample && dropped.len() == dim {
                continue;
            }
            let norm = Self::expected_norm(dim, dim - dropped.len());
            return Ok(DimMask {
                variant: MaskVariant::Random,
                dim,
                dropped,
                norm,
            });
        }
        Err(Error::param(
            "p",
            format!(
                "random mask left no dimension alive after {} draws (dim {}, drop probability {})",
                RESAMPLE_LIMIT, dim, p_drop
            ),
        ))
    }

    /// Contiguous-span drop: length `l ~ U{0..=alpha}`, start
    /// `s ~ U{0..=dim-l}`, columns `[s, s+l)` dropped. The start is drawn
    /// even for `l = 0` so the stream advances by exactly two draws per
    /// mask regardless of the outcome.
    pub fn sample_span(dim: usize, alpha: usize, rng: &mut SeedRng) -> Result<DimMask> {
        if dim == 0 {
            return Err(Error::param("dim", "mask width must be >= 1".to_string()));
        }
        if alpha >= dim {
            return Err(Error::param(
                "alpha",
                format!("span cap {} must be below the mask width {}", alpha, dim),
            ));
        }
        let len = rng.gen_range(0..=alpha);
        let start = rng.gen_range(0..=dim - len);
        let dropped: Vec<usize> = (start..start + len).collect();
        let norm = Self::expected_norm(dim, dim - len);
        Ok(DimMask {
            variant: MaskVariant::Span,
            dim,
            dropped,
            norm,
        })
    }

    /// Per-column multiplier of length `dim`: dropped columns get 0, the
    /// survivors get `norm` (the rescale is folded into the multiplier,
    /// which is bitwise equal to masking with {0,1} and then multiplying
    /// by `norm`, since `1.0 * norm == norm` and `0.0 * norm == 0.0`
    /// exactly).
    pub fn column_multiplier(&self) -> Vec<f64> {
        let mut m = vec![self.norm; self.dim];
        for &j in &self.dropped {
            m[j] = 0.0;
        }
        m
    }
}

/// Whole-head drop decisions for one example: the dropped head indices
/// and the `heads / kept` rescale for the survivors. At least one head
/// always survives (degenerate draws are redrawn).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMask {
    pub heads: usize,
    pub dropped: Vec<usize>,
    pub norm: f64,
}

impl HeadMask {
    pub fn identity(heads: usize) -> HeadMask {
        HeadMask {
            heads,
            dropped: Vec::new(),
            norm: 1.0,
        }
    }

    pub fn sample(heads: usize, p: f64, rng: &mut SeedRng) -> Result<HeadMask> {
        if heads == 0 {
            return Err(Error::param("heads", "head count must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param("p", format!("must be in [0, 1), got {}", p)));
        }
        for _ in 0..RESAMPLE_LIMIT {
            let dropped: Vec<usize> = (0..heads).filter(|_| rng.gen::<f64>() < p).collect();
            if dropped.len() == heads {
                continue;
            }
            let kept = heads - dropped.len();
            return Ok(HeadMask {
                heads,
                dropped,
                norm: heads as f64 / kept as f64,
            });
        }
        Err(Error::param(
            "p",
            format!(
                "head mask left no head alive after {} draws (heads {}, p {})",
                RESAMPLE_LIMIT, heads, p
            ),
        ))
    }

    pub fn keeps(&self, head: usize) -> bool {
        !self.dropped.contains(&head)
    }
}
