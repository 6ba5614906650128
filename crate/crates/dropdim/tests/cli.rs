//! Smoke tests for the command-line binary: one happy path through
//! train → eval → audit → export, and the error surfaces.

use std::path::Path;
use std::process::{Command, Output};

fn dropdim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropdim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--task", "copy",
    "--set", "task.vocab=12",
    "--set", "task.len_min=3",
    "--set", "task.len_max=5",
    "--set", "task.n_train=16",
    "--set", "task.n_dev=8",
    "--set", "task.n_test=8",
    "--set", "model.enc_layers=1",
    "--set", "model.dec_layers=1",
    "--set", "model.heads=2",
    "--set", "model.d_model=16",
    "--set", "model.ffn_dim=32",
    "--epochs", "2",
    "--batch-size", "8",
    "--set", "optim.warmup=10",
    "--seed", "5",
];

#[test]
fn train_eval_audit_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run_str = run.to_str().unwrap();

    let mut args = vec!["train"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--reg", "dropdim-random", "--p", "0.1", "--out", run_str]);
    let out = dropdim(&args);
    assert!(out.status.success(), "train failed: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("final train loss"), "got: {text}");
    assert!(text.contains("wall time"), "got: {text}");
    for artifact in ["config.txt", "records.csv", "trace.csv", "model.ckpt"] {
        assert!(run.join(artifact).exists(), "missing {artifact}");
    }

    let ckpt = run.join("model.ckpt");
    let out = dropdim(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--split", "dev"]);
    assert!(out.status.success(), "eval failed: {}", stderr(&out));
    assert!(stdout(&out).contains("token_accuracy"), "got: {}", stdout(&out));

    let out = dropdim(&["audit", "--run", run_str]);
    assert!(out.status.success(), "audit failed: {}", stderr(&out));
    assert!(stdout(&out).contains("verdict: PASS"), "got: {}", stdout(&out));
    assert!(run.join("audit.txt").exists());

    let export = dir.path().join("attn");
    let out = dropdim(&[
        "export-attention", "--ckpt", ckpt.to_str().unwrap(),
        "--split", "dev",
        "--example", "0",
        "--out", export.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "export failed: {}", stderr(&out));
    assert!(export.join("enc_self_mean.csv").exists());
    assert!(export.join("cross_mean.csv").exists());
}

#[test]
fn corrupted_trace_fails_the_audit_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let run_str = run.to_str().unwrap();

    let mut args = vec!["train"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--reg", "dropdim-random", "--p", "0.2", "--out", run_str]);
    assert!(dropdim(&args).status.success());

    // Tamper with one norm factor so the trace no longer adds up.
    let trace_path = run.join("trace.csv");
    let text = std::fs::read_to_string(&trace_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let victim = lines
        .iter()
        .position(|l| !l.starts_with("step") && !l.is_empty())
        .expect("at least one record");
    let mut fields: Vec<&str> = lines[victim].split(',').collect();
    let forged = "97.5";
    fields[5] = forged;
    lines[victim] = fields.join(",");
    std::fs::write(&trace_path, lines.join("\n") + "\n").unwrap();

    let out = dropdim(&["audit", "--run", run_str]);
    assert_eq!(out.status.code(), Some(2), "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("verdict: FAIL"), "got: {}", stdout(&out));
}

#[test]
fn invalid_flag_values_are_rejected() {
    // An out-of-enum regularizer is rejected with the valid choices.
    let out = dropdim(&["train", "--task", "copy", "--reg", "dropblock"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dropdim-random"), "got: {}", stderr(&out));

    // A structurally valid but semantically bad config is a validation
    // error (exit 1) naming the field.
    let out = dropdim(&["train", "--task", "copy", "--reg", "dropdim-random", "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("reg.p"), "got: {}", stderr(&out));

    // Evaluating a checkpoint that does not exist reports the io error.
    let out = dropdim(&["eval", "--ckpt", "/nonexistent/model.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error:"), "got: {}", stderr(&out));
}

#[test]
fn sweep_produces_marked_table() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("sweep");

    let mut args = vec!["sweep"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&[
        "--reg", "dropdim-random",
        "--axis", "p",
        "--values", "0.05,0.2",
        "--out", base.to_str().unwrap(),
    ]);
    let out = dropdim(&args);
    assert!(out.status.success(), "sweep failed: {}", stderr(&out));
    let table = std::fs::read_to_string(base.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "header plus one row per value: {table}");
    let best_rows = table.lines().filter(|l| l.ends_with(",1")).count();
    assert_eq!(best_rows, 1, "exactly one best row: {table}");
    assert!(Path::new(&base).join("p0.05").join("model.ckpt").exists());
    assert!(Path::new(&base).join("p0.2").join("model.ckpt").exists());
}
