//! Mask traces: a per-application log of every dimension mask used in a
//! training run, written as CSV so external tools can audit the run.
//!
//! One record is appended each time a dimension mask is applied to a
//! residual sub-block output. The CSV columns are
//! `step,example_id,location,variant,dropped_indices,norm_factor`, with
//! the dropped column indices joined by `;` (empty when nothing was
//! dropped). Only dimension masks are recorded — the baseline
//! regularizers do not produce trace rows.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{DimMask, MaskVariant};
use crate::error::{Error, Result};

/// Encoder or decoder half of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Encoder,
    Decoder,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Encoder => "encoder",
            Side::Decoder => "decoder",
        }
    }
}

/// Which residual sub-block within a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    SelfAttn,
    CrossAttn,
    Ffn,
}

impl Site {
    pub fn as_str(&self) -> &'static str {
        match self {
            Site::SelfAttn => "self_attn",
            Site::CrossAttn => "cross_attn",
            Site::Ffn => "ffn",
        }
    }
}

/// A sub-block address such as `encoder.layer0.ffn` or
/// `decoder.layer2.cross_attn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Location {
    pub side: Side,
    pub layer: usize,
    pub site: Site,
}

impl Location {
    pub fn new(side: Side, layer: usize, site: Site) -> Location {
        Location { side, layer, site }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.layer{}.{}", self.side.as_str(), self.layer, self.site.as_str())
    }
}

impl FromStr for Location {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('.');
        let (side, layer, site) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(side), Some(layer), Some(site), None) => (side, layer, site),
            _ => return Err(Error::InvalidData(format!("malformed location `{}`", s))),
        };
        let side = match side {
            "encoder" => Side::Encoder,
            "decoder" => Side::Decoder,
            other => return Err(Error::InvalidData(format!("unknown model side `{}`", other))),
        };
        let layer = layer
            .strip_prefix("layer")
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidData(format!("malformed layer in location `{}`", s)))?;
        let site = match site {
            "self_attn" => Site::SelfAttn,
            "cross_attn" => Site::CrossAttn,
            "ffn" => Site::Ffn,
            other => return Err(Error::InvalidData(format!("unknown sub-block `{}`", other))),
        };
        Ok(Location { side, layer, site })
    }
}

/// One mask application.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRecord {
    /// Optimizer step (0-based) during which the mask was applied.
    pub step: u64,
    /// Dataset-level id of the example the mask applied to.
    pub example_id: u64,
    pub location: Location,
    pub variant: MaskVariant,
    /// Sorted dropped column indices.
    pub dropped: Vec<usize>,
    /// Survivor rescale factor that was applied.
    pub norm: f64,
}

impl MaskRecord {
    pub fn from_mask(step: u64, example_id: u64, location: Location, mask: &DimMask) -> MaskRecord {
        MaskRecord {
            step,
            example_id,
            location,
            variant: mask.variant,
            dropped: mask.dropped.clone(),
            norm: mask.norm,
        }
    }
}

pub const TRACE_HEADER: &str = "step,example_id,location,variant,dropped_indices,norm_factor";

/// An in-memory mask log with CSV import/export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskTrace {
    pub records: Vec<MaskRecord>,
}

impl MaskTrace {
    pub fn new() -> MaskTrace {
        MaskTrace::default()
    }

    pub fn push(&mut self, record: MaskRecord) {
        self.records.push(record);
    }

    pub fn record(&mut self, step: u64, example_id: u64, location: Location, mask: &DimMask) {
        self.push(MaskRecord::from_mask(step, example_id, location, mask));
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Serialize to CSV. The float column uses the shortest
    /// round-trippable representation, so writing is deterministic and
    /// reading recovers the exact bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let dropped = r
                .dropped
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.example_id, r.location, r.variant, dropped, r.norm
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<MaskTrace> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == TRACE_HEADER => {}
            Some(h) => {
                return Err(Error::InvalidData(format!(
                    "unexpected trace header `{}` (expected `{}`)",
                    h, TRACE_HEADER
                )))
            }
            None => return Err(Error::InvalidData("empty trace file".to_string())),
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::InvalidData(format!(
                    "trace line {}: expected 6 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let bad = |what: &str| {
                Error::InvalidData(format!("trace line {}: bad {}", lineno + 2, what))
            };
            let step = fields[0].parse::<u64>().map_err(|_| bad("step"))?;
            let example_id = fields[1].parse::<u64>().map_err(|_| bad("example_id"))?;
            let location = fields[2].parse::<Location>()?;
            let variant = fields[3].parse::<MaskVariant>()?;
            let dropped = if fields[4].is_empty() {
                Vec::new()
            } else {
                fields[4]
                    .split(';')
                    .map(|d| d.parse::<usize>().map_err(|_| bad("dropped index")))
                    .collect::<Result<Vec<usize>>>()?
            };
            let norm = fields[5].parse::<f64>().map_err(|_| bad("norm_factor"))?;
            records.push(MaskRecord {
                step,
                example_id,
                location,
                variant,
                dropped,
                norm,
            });
        }
        Ok(MaskTrace { records })
    }

    pub fn read_csv(path: &Path) -> Result<MaskTrace> {
        let text = fs::read_to_string(path)?;
        MaskTrace::from_csv(&text)
    }
}
