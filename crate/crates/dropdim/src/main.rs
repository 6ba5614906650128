//! Command-line front end for the experiment harness.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dropdim::harness::{
    cmd_audit, cmd_data_sweep, cmd_eval, cmd_export_attention, cmd_sweep, cmd_testtime_drop,
    cmd_train, RunConfig, SweepAxis,
};
use dropdim::reg::RegKind;
use dropdim::tasks::TaskKind;
use dropdim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dropdim",
    version,
    about = "Structured-dropout laboratory: train small transformers on \
             synthetic sequence tasks and measure what dimension-masking does"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that assemble a run configuration. Application order: defaults,
/// then `--config`, `--preset`, `--task`, the named flags, each `--set`,
/// and finally `--seed` / `--out`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat key=value config file applied before the flags
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Model size preset: toy | paper-shape
    #[arg(long)]
    preset: Option<String>,
    /// Task: copy | reverse | toy_mt | toy_asr
    #[arg(long)]
    task: Option<String>,
    /// Regularizer: none | dropout | dropdim-random | dropdim-span
    #[arg(long)]
    reg: Option<String>,
    /// Drop probability (reg.p)
    #[arg(long)]
    p: Option<f64>,
    /// Maximum span length (reg.alpha)
    #[arg(long)]
    alpha: Option<usize>,
    /// Where masks apply: encoder | decoder | all
    #[arg(long)]
    part: Option<String>,
    /// Attention-internal regularizer: none | dropattention | drophead
    #[arg(long)]
    attn_reg: Option<String>,
    /// Attention-weight drop probability (reg.attn_p)
    #[arg(long)]
    attn_p: Option<f64>,
    /// Label smoothing mass
    #[arg(long)]
    label_smoothing: Option<f64>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Examples per optimizer step
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate of the inverse-sqrt schedule
    #[arg(long)]
    lr: Option<f64>,
    /// Warmup steps
    #[arg(long)]
    warmup: Option<usize>,
    /// Regenerate noisy training sources each epoch: true | false
    #[arg(long, value_name = "BOOL")]
    augment: Option<bool>,
    /// Any config key, repeatable: --set reg.p=0.05
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed for data, init, and masks
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for run artifacts
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_text(&std::fs::read_to_string(path)?)?,
            None => RunConfig::new(TaskKind::Copy),
        };
        if let Some(v) = &self.preset {
            config.set("model.preset", v)?;
        }
        if let Some(v) = &self.task {
            config.set("task.kind", v)?;
        }
        let named: [(&str, Option<String>); 10] = [
            ("reg.kind", self.reg.clone()),
            ("reg.p", self.p.map(|v| v.to_string())),
            ("reg.alpha", self.alpha.map(|v| v.to_string())),
            ("reg.part", self.part.clone()),
            ("reg.attn_kind", self.attn_reg.clone()),
            ("reg.attn_p", self.attn_p.map(|v| v.to_string())),
            ("model.label_smoothing", self.label_smoothing.map(|v| v.to_string())),
            ("optim.epochs", self.epochs.map(|v| v.to_string())),
            ("optim.batch_size", self.batch_size.map(|v| v.to_string())),
            ("optim.lr", self.lr.map(|v| v.to_string())),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        if let Some(v) = self.warmup {
            config.set("optim.warmup", &v.to_string())?;
        }
        if let Some(v) = self.augment {
            config.set("task.augment", &v.to_string())?;
        }
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::config("set", format!("expected KEY=VALUE, got `{kv}`"))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.out {
            config.out_dir = v.to_string_lossy().into_owned();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write records, trace, and checkpoint
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score an existing checkpoint on a dataset split
    Eval {
        /// Checkpoint written by `train`
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// Split to score: train | dev | test
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train one run per value of a regularizer axis and rank them
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Axis to vary: p | alpha
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, e.g. 0.01,0.05,0.1
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Train regularized-vs-plain pairs on nested training subsets
    DataSweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated training-set fractions in (0, 1]
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
    },
    /// Decode a trained model with masking noise forced on
    TesttimeDrop {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// Methods to force: dropout | dropdim-random (comma-separated)
        #[arg(long, value_delimiter = ',', default_value = "dropout,dropdim-random")]
        method: Vec<String>,
        /// Comma-separated drop rates in [0, 1)
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Fresh masks per (method, rate) cell
        #[arg(long, default_value_t = 10)]
        mask_seeds: u64,
        #[arg(long, default_value = "test")]
        split: String,
        /// Directory for testtime.csv (defaults to printing only)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Export attention heatmaps for one example as CSV tables
    ExportAttention {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
        /// Example index within the split
        #[arg(long, default_value_t = 0)]
        example: usize,
        /// Directory for the CSV tables
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Recheck a run's mask trace against its configured distribution
    Audit {
        /// Run directory written by `train`
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg } => {
            let config = cfg.build()?;
            let outcome = cmd_train(&config)?;
            println!("run {}", config.hash_hex());
            println!("artifacts in {}", outcome.out_dir.display());
            println!("final train loss {:.6}", outcome.final_train_loss);
            println!(
                "dev {} {:.6} | test {} {:.6}",
                outcome.metric_name, outcome.dev_metric, outcome.metric_name, outcome.test_metric
            );
            println!("wall time {:.1}s", outcome.wall_seconds);
        }
        Command::Eval { ckpt, split } => {
            let report = cmd_eval(&ckpt, &split)?;
            println!(
                "{} ({} examples): loss {:.6}, teacher-forced accuracy {:.4}",
                report.split, report.examples, report.loss, report.teacher_accuracy
            );
            println!("{} {:.6}", report.metric_name, report.metric_value);
        }
        Command::Sweep { cfg, axis, values } => {
            let config = cfg.build()?;
            let axis: SweepAxis = axis.parse()?;
            let table = cmd_sweep(&config, axis, &values)?;
            print!("{}", table.to_csv());
            let best = table.best();
            println!(
                "best {}={} (dev {} {:.6})",
                axis.as_str(),
                best.value,
                table.metric_name,
                best.dev_metric
            );
        }
        Command::DataSweep { cfg, fractions } => {
            let config = cfg.build()?;
            let table = cmd_data_sweep(&config, &fractions)?;
            print!("{}", table.to_csv());
        }
        Command::TesttimeDrop {
            ckpt,
            method,
            rates,
            mask_seeds,
            split,
            out,
        } => {
            let methods = method
                .iter()
                .map(|m| m.parse::<RegKind>())
                .collect::<Result<Vec<_>>>()?;
            let table =
                cmd_testtime_drop(&ckpt, &methods, &rates, mask_seeds, &split, out.as_deref())?;
            print!("{}", table.to_csv());
            for m in &methods {
                for &r in &rates {
                    if let Some(median) = table.median(*m, r) {
                        println!(
                            "median {} rate {}: {} {:.6}",
                            m.as_str(),
                            r,
                            table.metric_name,
                            median
                        );
                    }
                }
            }
        }
        Command::ExportAttention {
            ckpt,
            split,
            example,
            out,
        } => {
            let export = cmd_export_attention(&ckpt, &split, example, &out)?;
            println!(
                "wrote {} tables ({} heads, encoder {}x{}, cross {}x{})",
                export.files.len(),
                export.heads,
                export.enc_shape.0,
                export.enc_shape.1,
                export.cross_shape.0,
                export.cross_shape.1
            );
            for f in &export.files {
                println!("  {}", f.display());
            }
        }
        Command::Audit { run } => {
            let report = cmd_audit(&run)?;
            print!("{report}");
            if !report.pass {
                std::process::exit(2);
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
