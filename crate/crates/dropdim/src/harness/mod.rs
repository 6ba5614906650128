//! Experiment harness: run configuration, the training loop, evaluation,
//! sweeps, test-time masking, attention export, and the mask audit.
//!
//! Everything in here is deterministic given the run configuration: file
//! artifacts (`config.txt`, `records.csv`, `trace.csv`, checkpoints, sweep
//! tables) never contain wall-clock readings, and rerunning a command
//! reproduces them byte for byte.

pub mod attention_export;
pub mod audit_cmd;
pub mod eval;
pub mod evalcore;
pub mod kv;
pub mod optim;
pub mod records;
pub mod sweep;
pub mod testtime;
pub mod train;

pub use attention_export::{cmd_export_attention, export_for_example, AttentionExport};
pub use audit_cmd::{cmd_audit, AuditReport};
pub use eval::{cmd_eval, load_run, EvalReport};
pub use evalcore::{corpus_metric, decode_budget, decoded_metric, teacher_forced_split};
pub use kv::{OptimConfig, Preset, RunConfig};
pub use optim::{lr_at, Adam};
pub use records::{RecordRow, RunRecord, RECORDS_HEADER};
pub use sweep::{cmd_data_sweep, cmd_sweep, DataSweepTable, SweepAxis, SweepTable};
pub use testtime::{cmd_testtime_drop, TesttimeTable};
pub use train::{cmd_train, train_on, TrainOutcome};
