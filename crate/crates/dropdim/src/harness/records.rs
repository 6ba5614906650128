//! Per-run metric records and their CSV form.
//!
//! Schema: `epoch,split,loss,metric_name,metric_value`, preceded by a
//! `# config <sha256>` comment tying the file to its configuration.
//! Every field is deterministic — wall-clock time is reported on stdout
//! only, never written here, so reruns are byte-identical.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RECORDS_HEADER: &str = "epoch,split,loss,metric_name,metric_value";

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub metric_name: String,
    pub metric_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn new(config_hash: String) -> RunRecord {
        RunRecord { config_hash, rows: Vec::new() }
    }

    pub fn push(&mut self, epoch: usize, split: &str, loss: f64, metric_name: &str, metric_value: f64) {
        self.rows.push(RecordRow {
            epoch,
            split: split.to_string(),
            loss,
            metric_name: metric_name.to_string(),
            metric_value,
        });
    }

    /// Last row for a split/metric pair, if any.
    pub fn last(&self, split: &str, metric_name: &str) -> Option<&RecordRow> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.split == split && r.metric_name == metric_name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# config {}\n{}\n", self.config_hash, RECORDS_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.split, r.loss, r.metric_name, r.metric_value
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<RunRecord> {
        let mut config_hash = String::new();
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# config ") {
                config_hash = rest.trim().to_string();
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != RECORDS_HEADER {
                    return Err(Error::InvalidData(format!(
                        "line {}: expected header `{}`, got `{}`",
                        lineno + 1,
                        RECORDS_HEADER,
                        line
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::InvalidData(format!(
                    "line {}: expected 5 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let bad = |what: &str| Error::InvalidData(format!("line {}: bad {}", lineno + 1, what));
            rows.push(RecordRow {
                epoch: fields[0].parse().map_err(|_| bad("epoch"))?,
                split: fields[1].to_string(),
                loss: fields[2].parse().map_err(|_| bad("loss"))?,
                metric_name: fields[3].to_string(),
                metric_value: fields[4].parse().map_err(|_| bad("metric_value"))?,
            });
        }
        if !saw_header {
            return Err(Error::InvalidData("records csv has no header".to_string()));
        }
        Ok(RunRecord { config_hash, rows })
    }

    pub fn read_csv(path: &Path) -> Result<RunRecord> {
        let text = fs::read_to_string(path)?;
        RunRecord::from_csv(&text)
    }
}
