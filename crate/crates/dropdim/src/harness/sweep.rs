//! `sweep` and `data-sweep`: grids over a regularizer axis or the
//! training-set size, each cell a full training run.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::harness::kv::RunConfig;
use crate::harness::train::{cmd_train, train_on, TrainOutcome, SUBSET_STREAM};
use crate::reg::RegKind;
use crate::rng;
use crate::tasks::{generate, Dataset};

/// Which knob a `sweep` run varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Drop probability `reg.p`.
    P,
    /// Maximum span length `reg.alpha`.
    Alpha,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::P => "p",
            SweepAxis::Alpha => "alpha",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(SweepAxis::P),
            "alpha" => Ok(SweepAxis::Alpha),
            other => Err(Error::config(
                "sweep.axis",
                format!("expected `p` or `alpha`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub dev_metric: f64,
    pub test_metric: f64,
    pub best: bool,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub metric_name: &'static str,
    pub higher_is_better: bool,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn best(&self) -> &SweepRow {
        self.rows
            .iter()
            .find(|r| r.best)
            .expect("a sweep always marks one best row")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,metric_name,dev_metric,test_metric,best\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.axis.as_str(),
                row.value,
                self.metric_name,
                row.dev_metric,
                row.test_metric,
                u8::from(row.best)
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

fn mark_best(rows: &mut [SweepRow], higher_is_better: bool) {
    let mut best = 0;
    for i in 1..rows.len() {
        let better = if higher_is_better {
            rows[i].dev_metric > rows[best].dev_metric
        } else {
            rows[i].dev_metric < rows[best].dev_metric
        };
        if better {
            best = i;
        }
    }
    rows[best].best = true;
}

/// Train one run per value of the chosen axis, all other settings shared,
/// and mark the value with the best dev metric. Artifacts land in
/// `<base.out_dir>/<axis><value>/`, plus a `sweep.csv` summary at the top.
pub fn cmd_sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "must list at least one value"));
    }
    for &v in values {
        match axis {
            SweepAxis::P => {
                if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                    return Err(Error::config(
                        "sweep.values",
                        format!("drop probability {v} is outside [0, 1)"),
                    ));
                }
            }
            SweepAxis::Alpha => {
                if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0) {
                    return Err(Error::config(
                        "sweep.values",
                        format!("span length {v} is not a non-negative integer"),
                    ));
                }
            }
        }
    }

    let base_dir = PathBuf::from(&base.out_dir);
    let mut rows = Vec::with_capacity(values.len());
    let mut metric_name = base.task.kind.metric_name();
    for &v in values {
        let mut config = base.clone();
        match axis {
            SweepAxis::P => config.reg.p = v,
            SweepAxis::Alpha => config.reg.alpha = v as usize,
        }
        let label = format!("{}{}", axis.as_str(), v);
        config.out_dir = base_dir.join(label).to_string_lossy().into_owned();
        let outcome = cmd_train(&config)?;
        metric_name = outcome.metric_name;
        rows.push(SweepRow {
            value: v,
            dev_metric: outcome.dev_metric,
            test_metric: outcome.test_metric,
            best: false,
            out_dir: outcome.out_dir,
        });
    }
    mark_best(&mut rows, base.task.kind.higher_is_better());

    let table = SweepTable {
        axis,
        metric_name,
        higher_is_better: base.task.kind.higher_is_better(),
        rows,
    };
    std::fs::create_dir_all(&base_dir)?;
    std::fs::write(base_dir.join("sweep.csv"), table.to_csv())?;
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct DataSweepRow {
    pub fraction: f64,
    pub reg_kind: RegKind,
    pub train_examples: usize,
    pub dev_metric: f64,
    pub test_metric: f64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct DataSweepTable {
    pub metric_name: &'static str,
    pub rows: Vec<DataSweepRow>,
}

impl DataSweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,reg_kind,metric_name,dev_metric,test_metric\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.fraction,
                row.reg_kind.as_str(),
                self.metric_name,
                row.dev_metric,
                row.test_metric
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

fn subset(dataset: &Dataset, order: &[usize], fraction: f64) -> Dataset {
    let n = dataset.train.len();
    let keep = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut picked: Vec<usize> = order[..keep].to_vec();
    // Restore generation order so fraction 1.0 is exactly the full set.
    picked.sort_unstable();
    Dataset {
        spec: dataset.spec.clone(),
        seed: dataset.seed,
        train: picked.iter().map(|&i| dataset.train[i].clone()).collect(),
        dev: dataset.dev.clone(),
        test: dataset.test.clone(),
    }
}

/// For each training-set fraction, train twice — once with the base
/// regularizer, once with it switched off — on the same subset, so the
/// value of the regularizer can be read off at every data budget.
///
/// Subsets are nested: a smaller fraction is a prefix of the shuffle used
/// for a larger one, which keeps the comparison across budgets monotone in
/// the data rather than in the luck of the draw.
pub fn cmd_data_sweep(base: &RunConfig, fractions: &[f64]) -> Result<DataSweepTable> {
    if fractions.is_empty() {
        return Err(Error::config("sweep.fractions", "must list at least one fraction"));
    }
    for &f in fractions {
        if !(f.is_finite() && f > 0.0 && f <= 1.0) {
            return Err(Error::config(
                "sweep.fractions",
                format!("fraction {f} is outside (0, 1]"),
            ));
        }
    }
    if base.reg.kind == RegKind::None {
        return Err(Error::config(
            "reg.kind",
            "data-sweep compares the configured regularizer against `none`; \
             pick a non-trivial regularizer",
        ));
    }

    let dataset = generate(&base.task, base.seed)?;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    order.shuffle(&mut rng::indexed(base.seed, SUBSET_STREAM));

    let base_dir = PathBuf::from(&base.out_dir);
    let mut rows = Vec::with_capacity(fractions.len() * 2);
    let mut metric_name = base.task.kind.metric_name();
    for &fraction in fractions {
        let sub = subset(&dataset, &order, fraction);
        for kind in [base.reg.kind, RegKind::None] {
            let mut config = base.clone();
            config.reg.kind = kind;
            let label = format!("frac{}-{}", fraction, kind.as_str());
            config.out_dir = base_dir.join(label).to_string_lossy().into_owned();
            let outcome: TrainOutcome = train_on(&config, &sub)?;
            metric_name = outcome.metric_name;
            rows.push(DataSweepRow {
                fraction,
                reg_kind: kind,
                train_examples: sub.train.len(),
                dev_metric: outcome.dev_metric,
                test_metric: outcome.test_metric,
                out_dir: outcome.out_dir,
            });
        }
    }

    let table = DataSweepTable { metric_name, rows };
    std::fs::create_dir_all(&base_dir)?;
    std::fs::write(base_dir.join("data_sweep.csv"), table.to_csv())?;
    Ok(table)
}
