//! `testtime-drop`: apply masking noise at inference time to a trained
//! model and measure how gracefully decoding degrades.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::eval::load_run;
use crate::harness::evalcore::{decode_budget, decoded_metric};
use crate::harness::train::TESTTIME_STREAM;
use crate::reg::{AttnRegKind, Part, RegKind, RegularizerSpec};
use crate::rng;
use crate::tasks::generate;

#[derive(Debug, Clone)]
pub struct TesttimeRow {
    pub method: RegKind,
    pub rate: f64,
    pub mask_seed: u64,
    pub metric_value: f64,
}

#[derive(Debug, Clone)]
pub struct TesttimeTable {
    pub split: String,
    pub metric_name: &'static str,
    /// Metric of the untouched model on the same split.
    pub clean: f64,
    pub rows: Vec<TesttimeRow>,
}

impl TesttimeTable {
    /// Median metric over mask seeds for one (method, rate) cell.
    pub fn median(&self, method: RegKind, rate: f64) -> Option<f64> {
        let mut values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.rate == rate)
            .map(|r| r.metric_value)
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
        let n = values.len();
        Some(if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rate,mask_seed,metric_name,metric_value\n");
        writeln!(out, "none,0,0,{},{}", self.metric_name, self.clean)
            .expect("writing to a String cannot fail");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.method.as_str(),
                row.rate,
                row.mask_seed,
                self.metric_name,
                row.metric_value
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Decode the chosen split once clean, then once per
/// (method, rate, mask seed) with that method forced on during decoding.
/// Results are returned and, when `out` is given, written as
/// `testtime.csv` inside it.
pub fn cmd_testtime_drop(
    ckpt: &Path,
    methods: &[RegKind],
    rates: &[f64],
    mask_seeds: u64,
    split_name: &str,
    out: Option<&Path>,
) -> Result<TesttimeTable> {
    if methods.is_empty() {
        return Err(Error::config("testtime.method", "must list at least one method"));
    }
    for &m in methods {
        if !matches!(m, RegKind::Dropout | RegKind::DropdimRandom) {
            return Err(Error::config(
                "testtime.method",
                format!(
                    "expected `dropout` or `dropdim-random`, got `{}`",
                    m.as_str()
                ),
            ));
        }
    }
    if rates.is_empty() {
        return Err(Error::config("testtime.rates", "must list at least one rate"));
    }
    for &r in rates {
        if !(r.is_finite() && (0.0..1.0).contains(&r)) {
            return Err(Error::config(
                "testtime.rates",
                format!("rate {r} is outside [0, 1)"),
            ));
        }
    }
    if mask_seeds == 0 {
        return Err(Error::config("testtime.mask_seeds", "need at least one mask seed"));
    }

    let (config, model) = load_run(ckpt)?;
    let dataset = generate(&config.task, config.seed)?;
    let split = dataset.split(split_name)?;
    let batch = config.optim.batch_size;
    let budget = decode_budget(config.task.len_max);

    let clean = decoded_metric(&model, split, config.task.kind, batch, budget, None)?;

    let mut rows = Vec::with_capacity(methods.len() * rates.len() * mask_seeds as usize);
    for &method in methods {
        for &rate in rates {
            let spec = RegularizerSpec {
                kind: method,
                p: rate,
                alpha: 0,
                part: Part::All,
                attn: AttnRegKind::None,
                attn_p: 0.0,
            };
            for mask_seed in 0..mask_seeds {
                let mut mask_rng = rng::indexed(config.seed, TESTTIME_STREAM + mask_seed);
                let value = decoded_metric(
                    &model,
                    split,
                    config.task.kind,
                    batch,
                    budget,
                    Some((&spec, &mut mask_rng)),
                )?;
                rows.push(TesttimeRow {
                    method,
                    rate,
                    mask_seed,
                    metric_value: value,
                });
            }
        }
    }

    let table = TesttimeTable {
        split: split_name.to_string(),
        metric_name: config.task.kind.metric_name(),
        clean,
        rows,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("testtime.csv"), table.to_csv())?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::train::{cmd_train, tests::tiny_config};

    #[test]
    fn rate_zero_matches_clean_and_rows_cover_grid() {
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join("run");
        let config = tiny_config(&run_dir);
        cmd_train(&config).unwrap();
        let ckpt = run_dir.join("model.ckpt");
        let table = cmd_testtime_drop(
            &ckpt,
            &[RegKind::Dropout, RegKind::DropdimRandom],
            &[0.0, 0.4],
            2,
            "dev",
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 8);
        // A forced mask at rate 0 keeps every coordinate, so decoding is the
        // clean decoding bit for bit.
        for method in [RegKind::Dropout, RegKind::DropdimRandom] {
            assert_eq!(table.median(method, 0.0), Some(table.clean));
        }
        assert!(table.median(RegKind::Dropout, 0.4).is_some());
        assert!(table.median(RegKind::DropdimSpan, 0.4).is_none());
        let csv = std::fs::read_to_string(dir.path().join("testtime.csv")).unwrap();
        assert!(csv.starts_with("method,rate,mask_seed,metric_name,metric_value\n"));
        assert!(csv.contains("none,0,0,"));
        assert!(csv.contains("dropdim-random,0.4,1,"));
    }

    #[test]
    fn testtime_rejects_bad_arguments() {
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join("run");
        let config = tiny_config(&run_dir);
        cmd_train(&config).unwrap();
        let ckpt = run_dir.join("model.ckpt");
        let err = cmd_testtime_drop(&ckpt, &[RegKind::DropdimSpan], &[0.1], 1, "dev", None)
            .unwrap_err();
        assert!(err.to_string().contains("testtime.method"));
        let err = cmd_testtime_drop(&ckpt, &[RegKind::Dropout], &[1.0], 1, "dev", None)
            .unwrap_err();
        assert!(err.to_string().contains("testtime.rates"));
        let err =
            cmd_testtime_drop(&ckpt, &[RegKind::Dropout], &[0.1], 0, "dev", None).unwrap_err();
        assert!(err.to_string().contains("mask_seeds"));
    }
}
