//! `audit`: recheck a finished run's mask log against the distribution
//! its configuration promised.

use std::fmt;
use std::path::Path;

use crate::error::Result;
use crate::harness::kv::RunConfig;
use crate::reg::audit::{
    audit_random_masks, audit_span_masks, check_trace_consistency, RandomAudit, SpanAudit,
};
use crate::reg::{DimMask, MaskTrace, RegKind};

/// Two-sided z critical value at the 1% level.
const Z_LIMIT_1PCT: f64 = 2.5758293035489004;
/// Significance level shared by all chi-square checks here.
const LEVEL: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub kind: RegKind,
    /// Number of masks in the trace.
    pub masks: usize,
    /// Total dimensions dropped across all masks.
    pub dropped: usize,
    /// `(record index, step)` of trace rows whose norm, ordering, or
    /// contiguity contradicts their own drop list.
    pub inconsistent: Vec<(usize, u64)>,
    pub random: Option<RandomAudit>,
    pub span: Option<SpanAudit>,
    pub pass: bool,
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mask audit: reg.kind={}", self.kind.as_str())?;
        if !matches!(self.kind, RegKind::DropdimRandom | RegKind::DropdimSpan) {
            writeln!(f, "no dimension masks to audit for this regularizer")?;
            writeln!(f, "verdict: PASS")?;
            return Ok(());
        }
        writeln!(f, "masks: {} ({} dimensions dropped)", self.masks, self.dropped)?;
        if self.inconsistent.is_empty() {
            writeln!(f, "consistency: ok")?;
        } else {
            let (idx, step) = self.inconsistent[0];
            writeln!(
                f,
                "consistency: {} bad records (first is record {} at step {})",
                self.inconsistent.len(),
                idx,
                step
            )?;
        }
        if let Some(r) = &self.random {
            writeln!(
                f,
                "drop rate: observed {} of {} (expected {:.1}, z={:.3}, limit {:.3}) {}",
                r.overall.observed,
                r.overall.trials,
                r.overall.expected,
                r.overall.z,
                r.overall.z_limit,
                if r.overall.pass { "ok" } else { "FAIL" }
            )?;
            writeln!(
                f,
                "per-dim uniformity: chi2={:.2} (dof {}, critical {:.2}) {}",
                r.per_dim.statistic,
                r.per_dim.dof,
                r.per_dim.critical,
                if r.per_dim.pass { "ok" } else { "FAIL" }
            )?;
            if !r.bad_norms.is_empty() {
                writeln!(f, "bad norms: {} masks", r.bad_norms.len())?;
            }
        }
        if let Some(s) = &self.span {
            writeln!(
                f,
                "span lengths: chi2={:.2} (dof {}, critical {:.2}) {}",
                s.length.statistic,
                s.length.dof,
                s.length.critical,
                if s.length.pass { "ok" } else { "FAIL" }
            )?;
            writeln!(
                f,
                "span starts: chi2={:.2} (dof {}, critical {:.2}) {}",
                s.start.statistic,
                s.start.dof,
                s.start.critical,
                if s.start.pass { "ok" } else { "FAIL" }
            )?;
            if !s.bad_masks.is_empty() {
                writeln!(f, "bad span masks: {}", s.bad_masks.len())?;
            }
        }
        writeln!(f, "verdict: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Audit the run directory `run_dir` (as written by `train`): reread its
/// `config.txt` and `trace.csv`, recheck every record's internal
/// consistency, and test the empirical mask distribution against the
/// configured one at the 1% level. The report is also written to
/// `audit.txt` in the same directory.
pub fn cmd_audit(run_dir: &Path) -> Result<AuditReport> {
    let config_text = std::fs::read_to_string(run_dir.join("config.txt"))?;
    let config = RunConfig::from_text(&config_text)?;
    let d = config.d_model;

    let report = match config.reg.kind {
        RegKind::DropdimRandom | RegKind::DropdimSpan => {
            let trace = MaskTrace::read_csv(&run_dir.join("trace.csv"))?;
            let inconsistent: Vec<(usize, u64)> = check_trace_consistency(&trace.records, d)
                .into_iter()
                .map(|i| (i, trace.records[i].step))
                .collect();
            let masks: Vec<DimMask> = trace
                .records
                .iter()
                .map(|r| DimMask {
                    variant: r.variant,
                    dim: d,
                    dropped: r.dropped.clone(),
                    norm: r.norm,
                })
                .collect();
            let dropped = masks.iter().map(|m| m.dropped.len()).sum();
            let (random, span, stats_pass) = match config.reg.kind {
                RegKind::DropdimRandom => {
                    let a = audit_random_masks(&masks, d, config.reg.p, Z_LIMIT_1PCT, LEVEL)?;
                    let pass = a.pass;
                    (Some(a), None, pass)
                }
                _ => {
                    let a = audit_span_masks(&masks, d, config.reg.alpha, LEVEL)?;
                    let pass = a.pass;
                    (None, Some(a), pass)
                }
            };
            AuditReport {
                kind: config.reg.kind,
                masks: masks.len(),
                dropped,
                pass: inconsistent.is_empty() && stats_pass,
                inconsistent,
                random,
                span,
            }
        }
        other => AuditReport {
            kind: other,
            masks: 0,
            dropped: 0,
            inconsistent: Vec::new(),
            random: None,
            span: None,
            pass: true,
        },
    };

    std::fs::write(run_dir.join("audit.txt"), report.to_string())?;
    Ok(report)
}
