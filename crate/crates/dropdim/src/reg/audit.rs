//! Statistical audits of sampled masks.
//!
//! These checks verify that logged masks actually follow their declared
//! distributions: the random variant's empirical drop rate is compared
//! against its Bernoulli parameter (overall z-test plus a per-dimension
//! chi-square), and the span variant's lengths and starts are tested for
//! discrete uniformity (starts with a chi-square stratified by length,
//! since the start support shrinks as the span grows). Every mask's
//! recorded rescale factor is also recomputed from its drop count.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::trace::MaskRecord;
use super::{DimMask, MaskVariant};
use crate::error::{Error, Result};

/// Two-sided z-test of an observed count against `Binomial(n, p)`.
#[derive(Debug, Clone)]
pub struct BinomialCheck {
    pub observed: u64,
    pub trials: u64,
    pub expected: f64,
    pub z: f64,
    pub z_limit: f64,
    pub pass: bool,
}

pub fn binomial_check(observed: u64, trials: u64, p: f64, z_limit: f64) -> BinomialCheck {
    let n = trials as f64;
    let expected = n * p;
    let variance = n * p * (1.0 - p);
    let z = if variance > 0.0 {
        (observed as f64 - expected) / variance.sqrt()
    } else if observed as f64 == expected {
        0.0
    } else {
        f64::INFINITY
    };
    BinomialCheck {
        observed,
        trials,
        expected,
        z,
        z_limit,
        pass: z.abs() <= z_limit,
    }
}

/// A chi-square goodness-of-fit result at significance `level`.
#[derive(Debug, Clone)]
pub struct ChiSquareCheck {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub level: f64,
    pub pass: bool,
}

fn chi_square_critical(dof: usize, level: f64) -> Result<f64> {
    if dof == 0 {
        return Ok(0.0);
    }
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::param("dof", format!("chi-square needs dof >= 1: {}", e)))?;
    Ok(dist.inverse_cdf(1.0 - level))
}

/// Compare observed cell counts against explicit expected counts. `dof`
/// is supplied by the caller because stratified tests pool several
/// constrained tables into one statistic.
pub fn chi_square_cells(observed: &[u64], expected: &[f64], dof: usize, level: f64) -> Result<ChiSquareCheck> {
    if observed.len() != expected.len() {
        return Err(Error::param(
            "expected",
            format!("{} expected cells for {} observed", expected.len(), observed.len()),
        ));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::param("level", format!("must be in (0, 1), got {}", level)));
    }
    let mut statistic = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            if o != 0 {
                return Err(Error::param(
                    "expected",
                    "zero expected count in a cell with observations".to_string(),
                ));
            }
            continue;
        }
        let diff = o as f64 - e;
        statistic += diff * diff / e;
    }
    let critical = chi_square_critical(dof, level)?;
    Ok(ChiSquareCheck {
        statistic,
        dof,
        critical,
        level,
        pass: dof == 0 || statistic <= critical,
    })
}

/// Uniformity over `observed.len()` equally likely cells.
pub fn chi_square_uniform(observed: &[u64], level: f64) -> Result<ChiSquareCheck> {
    let total: u64 = observed.iter().sum();
    let e = total as f64 / observed.len() as f64;
    let expected = vec![e; observed.len()];
    chi_square_cells(observed, &expected, observed.len().saturating_sub(1), level)
}

/// Audit of a batch of random-variant masks.
#[derive(Debug, Clone)]
pub struct RandomAudit {
    /// Total drops against `Binomial(n_masks * dim, p)`.
    pub overall: BinomialCheck,
    /// Per-dimension drop counts against their common binomial law.
    pub per_dim: ChiSquareCheck,
    /// Indices of masks whose recorded norm disagrees with `dim / kept`.
    pub bad_norms: Vec<usize>,
    pub pass: bool,
}

pub fn audit_random_masks(
    masks: &[DimMask],
    dim: usize,
    p: f64,
    z_limit: f64,
    level: f64,
) -> Result<RandomAudit> {
    if masks.is_empty() {
        return Err(Error::param("masks", "no masks to audit".to_string()));
    }
    let n = masks.len();
    let mut per_dim = vec![0u64; dim];
    let mut total = 0u64;
    let mut bad_norms = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        if m.dim != dim {
            return Err(Error::param(
                "masks",
                format!("mask {} has width {}, expected {}", i, m.dim, dim),
            ));
        }
        for &j in &m.dropped {
            if j >= dim {
                return Err(Error::index(format!("mask {} drops column {} >= {}", i, j, dim)));
            }
            per_dim[j] += 1;
            total += 1;
        }
        if m.norm.to_bits() != DimMask::expected_norm(dim, m.kept()).to_bits() {
            bad_norms.push(i);
        }
    }
    let overall = binomial_check(total, (n * dim) as u64, p, z_limit);
    // Each dimension's drop count is an independent Binomial(n, p);
    // summing their squared z-scores gives an approximate chi-square
    // with one degree of freedom per dimension.
    let variance = n as f64 * p * (1.0 - p);
    let expected = n as f64 * p;
    let mut statistic = 0.0;
    for &c in &per_dim {
        let diff = c as f64 - expected;
        if variance > 0.0 {
            statistic += diff * diff / variance;
        } else if diff != 0.0 {
            // Degenerate law (p = 0): any deviation is impossible, not
            // merely improbable.
            statistic = f64::INFINITY;
        }
    }
    let critical = chi_square_critical(dim, level)?;
    let per_dim_check = ChiSquareCheck {
        statistic,
        dof: dim,
        critical,
        level,
        pass: statistic <= critical,
    };
    let pass = overall.pass && per_dim_check.pass && bad_norms.is_empty();
    Ok(RandomAudit {
        overall,
        per_dim: per_dim_check,
        bad_norms,
        pass,
    })
}

/// Audit of a batch of span-variant masks.
#[derive(Debug, Clone)]
pub struct SpanAudit {
    /// Span lengths against uniform over `{0..=alpha}`.
    pub length: ChiSquareCheck,
    /// Span starts against uniform over each length's support, pooled
    /// across lengths.
    pub start: ChiSquareCheck,
    /// Masks whose norm or contiguity is wrong.
    pub bad_masks: Vec<usize>,
    pub pass: bool,
}

/// Number of start-position bins per length stratum.
const START_BINS: usize = 8;

pub fn audit_span_masks(masks: &[DimMask], dim: usize, alpha: usize, level: f64) -> Result<SpanAudit> {
    if masks.is_empty() {
        return Err(Error::param("masks", "no masks to audit".to_string()));
    }
    if alpha >= dim {
        return Err(Error::param(
            "alpha",
            format!("span cap {} must be below the mask width {}", alpha, dim),
        ));
    }
    let mut length_counts = vec![0u64; alpha + 1];
    // starts[l] collects the observed start of every mask with length l >= 1.
    let mut starts: Vec<Vec<usize>> = vec![Vec::new(); alpha + 1];
    let mut bad_masks = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        if m.dim != dim {
            return Err(Error::param(
                "masks",
                format!("mask {} has width {}, expected {}", i, m.dim, dim),
            ));
        }
        let len = m.dropped.len();
        if len > alpha {
            return Err(Error::param(
                "masks",
                format!("mask {} drops {} columns, above the cap {}", i, len, alpha),
            ));
        }
        length_counts[len] += 1;
        let mut ok = m.norm.to_bits() == DimMask::expected_norm(dim, m.kept()).to_bits();
        if len > 0 {
            let first = m.dropped[0];
            let last = m.dropped[len - 1];
            let contiguous = last - first + 1 == len && m.dropped.windows(2).all(|w| w[1] == w[0] + 1);
            if contiguous && last < dim {
                starts[len].push(first);
            } else {
                ok = false;
            }
        }
        if !ok {
            bad_masks.push(i);
        }
    }
    let length = chi_square_uniform(&length_counts, level)?;

    // Start uniformity, stratified by length: for each length the start
    // is uniform over {0..=dim-len}; supports of different sizes are
    // handled by binning each stratum and pooling the statistics.
    let mut statistic = 0.0;
    let mut dof = 0usize;
    for (len, obs) in starts.iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        let support = dim - len + 1;
        let bins = support.min(START_BINS);
        let mut counts = vec![0u64; bins];
        for &s in obs {
            // Bin b covers starts [b*support/bins, (b+1)*support/bins).
            let b = (s * bins) / support;
            counts[b] += 1;
        }
        let n_l = obs.len() as f64;
        for (b, &c) in counts.iter().enumerate() {
            // Bin b receives exactly the starts s with floor(s*bins/support) == b,
            // i.e. ceil(b*support/bins) <= s < ceil((b+1)*support/bins).
            let width = (((b + 1) * support).div_ceil(bins) - (b * support).div_ceil(bins)) as f64;
            let e = n_l * width / support as f64;
            let diff = c as f64 - e;
            statistic += diff * diff / e;
        }
        dof += bins - 1;
    }
    let critical = chi_square_critical(dof, level)?;
    let start = ChiSquareCheck {
        statistic,
        dof,
        critical,
        level,
        pass: dof == 0 || statistic <= critical,
    };
    let pass = length.pass && start.pass && bad_masks.is_empty();
    Ok(SpanAudit {
        length,
        start,
        bad_masks,
        pass,
    })
}

/// Recompute every trace record's norm from its drop count and report
/// the rows (by index) where the stored factor disagrees bit for bit.
/// Also flags span records whose dropped set is not contiguous.
pub fn check_trace_consistency(records: &[MaskRecord], dim: usize) -> Vec<usize> {
    let mut bad = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let kept = dim.saturating_sub(r.dropped.len());
        let mut ok = r.dropped.iter().all(|&j| j < dim)
            && r.dropped.windows(2).all(|w| w[0] < w[1])
            && r.norm.to_bits() == DimMask::expected_norm(dim, kept).to_bits();
        if r.variant == MaskVariant::Span && !r.dropped.is_empty() {
            ok &= r.dropped.windows(2).all(|w| w[1] == w[0] + 1);
        }
        if !ok {
            bad.push(i);
        }
    }
    bad
}
