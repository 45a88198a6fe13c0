use std::fs;
use std::path::Path;
use std::process::Command;

use faultdx::harness::{cli_main_with, heatmap_from_csv};

const TINY: &str = "\
# small and fast
signals.fs = 2000
signals.n = 1000
machine.rotation_hz = 20
machine.gmf_hz = 300
machine.bpfo_hz = 87
machine.bpfi_hz = 123
machine.impact_resonance_hz = 250
spectral.f_max_hz = 400
model.conv_filters = 4
model.dense_units = 16
train.max_epochs = 3
experiment.n_total = 70
experiment.n_r = 2
experiment.repetitions = 2
experiment.test_baselines = 2
experiment.seed = 5
";

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["faultdx"];
    argv.extend_from_slice(args);
    let code = cli_main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    (dir, cfg)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["train", "--no-such-flag"]).0, 1);
    assert_eq!(run(&[]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("sweep-total"));
}

#[test]
fn missing_config_exits_2_with_path() {
    let (code, _, err) = run(&["train", "--config", "/nowhere/exp.cfg"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nowhere/exp.cfg"), "{err}");
}

#[test]
fn bad_config_line_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "train.patience = 3\nmystery = 1\n").unwrap();
    let (code, _, err) = run(&["build-dataset", "--config", p(&cfg)]);
    assert_eq!(code, 2);
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn gen_writes_one_file_per_condition() {
    let (dir, cfg) = setup();
    let out = dir.path().join("signals");
    let (code, _, err) = run(&["gen", "--config", &cfg, "--out", p(&out), "--count", "2"]);
    assert_eq!(code, 0, "{err}");
    for label in ["normal", "bpfo", "bpfi", "unbalance", "misalignment", "looseness", "gear_fault"] {
        let files = fs::read_dir(out.join(label)).unwrap().count();
        assert_eq!(files, 2, "{label}");
    }
    let text = fs::read_to_string(out.join("unbalance").join("unbalance_000.txt")).unwrap();
    assert!(text.starts_with("fs 2000\n"));
    assert_eq!(text.lines().count(), 1001);
}

#[test]
fn train_diagnose_explain_round() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    let (code, _, err) = run(&["build-dataset", "--config", &cfg, "--out", p(&out)]);
    assert_eq!(code, 0, "{err}");
    let dataset = out.join("dataset.csv");
    let (code, _, err) = run(&["train", "--config", &cfg, "--out", p(&out), "--dataset", p(&dataset)]);
    assert_eq!(code, 0, "{err}");
    let model = out.join("model.fdx");
    assert!(model.is_file());
    assert_eq!(fs::read_to_string(out.join("history.csv")).unwrap().lines().count(), 4);

    let sig_dir = dir.path().join("signals");
    assert_eq!(run(&["gen", "--config", &cfg, "--out", p(&sig_dir)]).0, 0);
    let signal = sig_dir.join("misalignment").join("misalignment_000.txt");

    let (code, line, err) = run(&["diagnose", "--config", &cfg, "--model", p(&model), "--signal", p(&signal)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(line.lines().count(), 1);
    assert!(line.starts_with("{\"label\": \""));
    assert!(line.contains("\"probabilities\": {\"normal\": "));
    assert_eq!(line.matches(": 0.").count() + line.matches(": 1").count() >= 7, true);

    let heat = out.join("h.csv");
    let svg = out.join("h.svg");
    let (code, line, err) = run(&[
        "explain", "--config", &cfg, "--model", p(&model), "--signal", p(&signal), "--heatmap", p(&heat), "--svg",
        p(&svg),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(line.contains("\"top_frequencies\": ["));
    let rows = heatmap_from_csv(&fs::read_to_string(&heat).unwrap(), &heat).unwrap();
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.2)));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    // explicit target class
    let (code, line, _) = run(&[
        "explain", "--config", &cfg, "--model", p(&model), "--signal", p(&signal), "--target", "unbalance",
        "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    assert!(line.contains("\"target\": \"unbalance\""));
    assert!(out.join("heatmap.csv").is_file());

    // a corrupted model is a data error
    let mut bytes = fs::read(&model).unwrap();
    bytes[0] = b'?';
    let broken = out.join("broken.fdx");
    fs::write(&broken, bytes).unwrap();
    assert_eq!(run(&["diagnose", "--model", p(&broken), "--signal", p(&signal)]).0, 2);

    // a malformed signal is a data error
    let bad = out.join("bad.txt");
    fs::write(&bad, "fs 2000\n0.1\nnot-a-number\n").unwrap();
    let (code, _, err) = run(&["diagnose", "--model", p(&model), "--signal", p(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn evaluate_is_reproducible_and_keeps_models() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["evaluate", "--config", &cfg, "--out", p(&a)]).0, 0);
    let (code, text, err) = run(&["evaluate", "--config", &cfg, "--out", p(&b)]);
    assert_eq!(code, 0, "{err}");
    assert!(text.contains("runs: 2"));
    for f in ["report.txt", "report.csv", "models/run_01.fdx", "models/run_02.fdx"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timing.csv").is_file());

    let (code, text, _) = run(&["evaluate", "--config", &cfg, "--out", p(&a), "--model", p(&a.join("models/run_01.fdx"))]);
    assert_eq!(code, 0);
    assert!(text.contains("runs: 1"));

    // a different seed changes the runs
    let c = dir.path().join("c");
    assert_eq!(run(&["evaluate", "--config", &cfg, "--out", p(&c), "--seed", "6"]).0, 0);
    assert_ne!(fs::read(a.join("models/run_01.fdx")).unwrap(), fs::read(c.join("models/run_01.fdx")).unwrap());
}

#[test]
fn evaluate_on_a_labeled_test_directory() {
    let (dir, cfg) = setup();
    let sigs = dir.path().join("test_signals");
    assert_eq!(run(&["gen", "--config", &cfg, "--out", p(&sigs), "--seed", "99"]).0, 0);
    let out = dir.path().join("o");
    let set = format!("paths.test={}", p(&sigs));
    let (code, text, err) = run(&["evaluate", "--config", &cfg, "--out", p(&out), "--set", &set]);
    assert_eq!(code, 0, "{err}");
    assert!(text.contains("runs: 2"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let total: usize = row[5..].iter().map(|v| v.parse::<usize>().unwrap()).sum();
    assert_eq!(total, 7);
}

#[test]
fn sweeps_write_tables() {
    let (dir, cfg) = setup();
    let out = dir.path().join("s");
    let (code, text, err) = run(&[
        "sweep-total", "--config", &cfg, "--out", p(&out), "--sizes", "70,105", "--set", "experiment.repetitions=1",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(text.lines().count(), 3);
    assert_eq!(fs::read_to_string(out.join("sweep_total.csv")).unwrap().lines().count(), 3);
    let (code, text, err) = run(&[
        "sweep-real", "--config", &cfg, "--out", p(&out), "--counts", "0", "--set", "experiment.repetitions=1",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn non_finite_loss_exits_3() {
    let (dir, cfg) = setup();
    let out = dir.path().join("nan");
    let (code, _, err) = run(&["train", "--config", &cfg, "--out", p(&out), "--set", "train.learning_rate=1e307"]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("non-finite"));
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_faultdx");
    let status = Command::new(exe).arg("nonsense").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = Command::new(exe).args(["train", "--config", "/missing.cfg"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("/missing.cfg"));
}
