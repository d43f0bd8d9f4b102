use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_interpnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn interpnet")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &TempDir, name: &str, mode: &str, task: &str, n: usize) -> PathBuf {
    let path = dir.path().join(name);
    ok(&["synth", "--out", p(&path), "--mode", mode, "--task", task, "--samples", &n.to_string(), "--seed", "3"]);
    path
}

const SMALL: [&str; 8] = ["--refs", "8", "--hidden", "4", "--epochs", "2", "--batch", "8"];

#[test]
fn synth_writes_header_plus_samples_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.jsonl", "intensity", "classification", 100);
    let b = synth(&dir, "b.jsonl", "intensity", "classification", 100);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.jsonl");
    assert_eq!(run(&["synth", "--out", p(&out), "--mode", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--out", p(&out)]).status.code(), Some(2));
    let data = synth(&dir, "d.jsonl", "trend", "classification", 20);
    let ck = dir.path().join("ck.json");
    let bad_lr = run(&["train", "--data", p(&data), "--out", p(&ck), "--lr", "-1"]);
    assert_eq!(bad_lr.status.code(), Some(2));
    let wrong_task = run(&["train", "--data", p(&data), "--out", p(&ck), "--task", "regression"]);
    assert_eq!(wrong_task.status.code(), Some(2));
    assert!(!ck.exists());
}

#[test]
fn missing_input_file_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let out = run(&["train", "--data", "/nonexistent/d.jsonl", "--out", p(&dir.path().join("c.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "d.jsonl", "transient", "classification", 40);
    let ck = dir.path().join("ck.json");
    let mut args = vec!["train", "--data", p(&data), "--out", p(&ck), "--seed", "5"];
    args.extend(SMALL);
    let out = ok(&args);
    let log = String::from_utf8(out.stdout).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch, train_loss, val_loss"));
    assert_eq!(lines.count(), 2);

    let metrics = dir.path().join("m.json");
    ok(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--metrics", p(&metrics)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 1);
    for k in ["auc", "auprc", "loss"] {
        assert!(report["mean"][k].is_f64(), "{k}");
    }

    ok(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--metrics", p(&metrics), "--kfold", "3"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);

    let preds = dir.path().join("p.jsonl");
    ok(&["predict", "--checkpoint", p(&ck), "--data", p(&data), "--out", p(&preds)]);
    let text = fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().count(), 40);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let y = v["prediction"].as_f64().unwrap();
        assert!(y > 0.0 && y < 1.0);
        assert!(v["id"].is_string());
    }
}

#[test]
fn eval_rejects_a_mismatched_dataset() {
    let dir = TempDir::new().unwrap();
    let cls = synth(&dir, "c.jsonl", "trend", "classification", 20);
    let reg = synth(&dir, "r.jsonl", "trend", "regression", 20);
    let ck = dir.path().join("ck.json");
    let mut args = vec!["train", "--data", p(&cls), "--out", p(&ck)];
    args.extend(SMALL);
    ok(&args);
    let out = run(&["eval", "--checkpoint", p(&ck), "--data", p(&reg), "--metrics", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn regression_predictions_are_in_days() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "d.jsonl", "trend", "regression", 30);
    let ck = dir.path().join("ck.json");
    let mut args = vec!["train", "--data", p(&data), "--out", p(&ck), "--channels", "i"];
    args.extend(SMALL);
    ok(&args);
    let preds = dir.path().join("p.jsonl");
    ok(&["predict", "--checkpoint", p(&ck), "--data", p(&data), "--out", p(&preds)]);
    for line in fs::read_to_string(&preds).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["prediction"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn gradcheck_reports_eps_and_passes() {
    let out = ok(&["gradcheck", "--seed", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("eps = 1e-5"));
    assert!(text.lines().last().unwrap().contains("(below"));
    let strict = run(&["gradcheck", "--seed", "1", "--tolerance", "1e-30"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn ablate_prints_seven_rows() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "d.jsonl", "intensity", "classification", 24);
    let table = dir.path().join("t.json");
    let mut args = vec!["ablate", "--data", p(&data), "--kfold", "2", "--out", p(&table)];
    args.extend(SMALL);
    let out = ok(&args);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&table).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 7);
    let base = run(&["ablate", "--data", p(&data), "--baseline", "m"]);
    assert_eq!(base.status.code(), Some(2));
}

#[test]
fn sparsify_thins_each_channel() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "d.jsonl", "intensity", "classification", 10);
    let thin = dir.path().join("s.jsonl");
    ok(&["sparsify", "--data", p(&data), "--out", p(&thin), "--fraction", "0.5", "--seed", "2"]);
    let before = fs::read_to_string(&data).unwrap();
    let after = fs::read_to_string(&thin).unwrap();
    assert_eq!(after.lines().count(), 11);
    assert!(after.len() < before.len());
    let bad = run(&["sparsify", "--data", p(&data), "--out", p(&thin), "--fraction", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}
