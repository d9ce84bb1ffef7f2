//! End-to-end behaviour of the `swproj` binary: outputs, artifacts, exit codes
//! and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swproj_cli::report::RunReport;
use swproj_core::pointcloud::load_cloud;
use tempfile::TempDir;

fn swproj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swproj"))
        .args(args)
        .current_dir(dir)
        .env_remove("SWPROJ_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = swproj(dir, args);
    assert!(
        out.status.success(),
        "swproj {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    swproj(dir, args).status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn value_line(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("value "))
        .expect("value line")
        .parse()
        .unwrap()
}

fn read_report(path: &Path) -> RunReport {
    let text = fs::read_to_string(path).unwrap();
    let r: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(r.to_json().unwrap(), text, "report must re-serialize to the same bytes");
    r
}

const TINY_TRAIN: &str = "loss = sw\nepochs = 2\nclouds = 6\nm = 8\nbatch_size = 3\nhidden = 8\nprojections = 20\n";

#[test]
fn gen_writes_loadable_deterministic_files() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let stdout = ok(dir, &["gen", "--kind", "sphere-shell", "--n", "3", "--m", "16", "--seed", "5", "--out-dir", "a"]);
    assert_eq!(stdout.lines().count(), 3);
    ok(dir, &["gen", "--kind", "sphere-shell", "--n", "3", "--m", "16", "--seed", "5", "--out-dir", "b"]);
    for i in 0..3 {
        let name = format!("sphere-shell-{i:04}.xyz");
        let cloud = load_cloud(dir.join("a").join(&name)).unwrap();
        assert_eq!((cloud.m(), cloud.d()), (16, 3));
        assert_eq!(fs::read(dir.join("a").join(&name)).unwrap(), fs::read(dir.join("b").join(&name)).unwrap());
    }
}

#[test]
fn gen_rejects_bad_dimension_and_unwritable_directory() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(code(dir, &["gen", "--kind", "cube-surface", "--d", "7", "--out-dir", "x"]), 2);
    assert_eq!(code(dir, &["gen", "--kind", "no-such-shape", "--out-dir", "x"]), 2);
    write(dir, "file", "not a directory");
    assert_eq!(code(dir, &["gen", "--kind", "plane-grid", "--out-dir", "file/sub"]), 4);
}

#[test]
fn dist_fixtures() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "x.xyz", "1 2\n0 0\n");
    write(dir, "y.xyz", "1 2\n3 4\n");
    assert_eq!(value_line(&ok(dir, &["dist", "x.xyz", "y.xyz", "--metric", "emd"])), 5.0);
    // The displacement (3, 4) seen along (1, 0) has length 3 and along (0, 1) length 4.
    assert_eq!(value_line(&ok(dir, &["dist", "x.xyz", "y.xyz", "--metric", "pw", "--theta", "1,0"])), 3.0);
    assert_eq!(value_line(&ok(dir, &["dist", "x.xyz", "y.xyz", "--metric", "pw", "--theta", "0,2"])), 4.0);

    ok(dir, &["gen", "--kind", "gaussian-blob", "--n", "2", "--m", "32", "--out-dir", "c"]);
    let a = "c/gaussian-blob-0000.xyz";
    let out = ok(dir, &["dist", a, a, "--metric", "vdsw", "--kappa", "1", "--seed", "7"]);
    assert_eq!(value_line(&out), 0.0);
    let dir_line = out.lines().find_map(|l| l.strip_prefix("direction ")).expect("direction line");
    let norm: f64 = dir_line.split(',').map(|v| v.parse::<f64>().unwrap().powi(2)).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-9);
}

#[test]
fn dist_stdout_and_report_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen", "--kind", "cube-surface", "--n", "2", "--m", "32", "--out-dir", "c"]);
    let (a, b) = ("c/cube-surface-0000.xyz", "c/cube-surface-0001.xyz");
    for metric in ["cd", "emd", "sw", "maxsw", "vdsw"] {
        let run = || {
            let stdout = ok(dir, &["dist", a, b, "--metric", metric, "--out", "r.json"]);
            (stdout, fs::read(dir.join("r.json")).unwrap())
        };
        let first = run();
        assert_eq!(first, run(), "{metric}");
        let first = first.0;
        let report = read_report(&dir.join("r.json"));
        assert_eq!(report.metrics.len(), 1);
        assert_eq!(report.metrics[0]["value"].as_f64().unwrap(), value_line(&first));
    }
}

#[test]
fn dist_rejects_invalid_flag_combinations() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "x.xyz", "2 2\n0 0\n1 1\n");
    write(dir, "y3.xyz", "2 3\n0 0 0\n1 1 1\n");
    let cases: &[&[&str]] = &[
        &["--metric", "sw", "--kappa", "1"],
        &["--metric", "sw", "--T", "5"],
        &["--metric", "maxsw", "--L", "5"],
        &["--metric", "emd", "--seed", "1"],
        &["--metric", "cd", "--p", "1"],
        &["--metric", "pw"],
        &["--metric", "vdsw", "--theta", "1,0"],
        &["--metric", "nope"],
        &["--metric", "sw", "--p", "0.5"],
    ];
    for extra in cases {
        let mut args = vec!["dist", "x.xyz", "x.xyz"];
        args.extend_from_slice(extra);
        assert_eq!(code(dir, &args), 2, "{extra:?}");
    }
    assert_eq!(code(dir, &["dist", "x.xyz", "y3.xyz", "--metric", "sw"]), 2);
    assert_eq!(code(dir, &["dist", "x.xyz", "missing.xyz", "--metric", "sw"]), 4);
    write(dir, "bad.xyz", "2 2\n0 0\n");
    assert_eq!(code(dir, &["dist", "x.xyz", "bad.xyz", "--metric", "sw"]), 4);
    assert_eq!(code(dir, &["dist", "x.xyz", "x.xyz", "--metric", "pw", "--theta", "0,0"]), 3);
}

#[test]
fn train_writes_history_checkpoints_and_report() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "t.cfg", TINY_TRAIN);
    let stdout = ok(dir, &["train", "t.cfg", "--out-dir", "run1"]);
    assert!(stdout.contains("emd "));
    let history = fs::read_to_string(dir.join("run1/history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(!history.contains("wall_ms"));
    let report = read_report(&dir.join("run1/report.json"));
    assert!(report.timings_ms.is_none());
    assert!(report.artifacts.iter().any(|a| a.ends_with("autoencoder.ckpt")));
    assert!(!report.artifacts.iter().any(|a| a.ends_with("amortized.ckpt")));
    let names: Vec<&str> = report.metrics.iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["train_objective", "cd", "sw", "emd"]);

    // Same config and seed: identical artifacts byte for byte.
    ok(dir, &["train", "t.cfg", "--out-dir", "run2"]);
    for f in ["history.jsonl", "autoencoder.ckpt"] {
        assert_eq!(fs::read(dir.join("run1").join(f)).unwrap(), fs::read(dir.join("run2").join(f)).unwrap());
    }

    // The saved checkpoint evaluates on fresh clouds of the trained size.
    ok(dir, &["gen", "--kind", "sphere-shell", "--n", "2", "--m", "8", "--out-dir", "data"]);
    let eval = ok(dir, &["eval", "--checkpoint", "run1/autoencoder.ckpt", "--data-dir", "data", "--out", "e.json"]);
    assert_eq!(eval.lines().count(), 3);
    assert_eq!(read_report(&dir.join("e.json")).metrics.len(), 3);
}

#[test]
fn train_with_amortized_loss_saves_the_model() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = TINY_TRAIN.replace("loss = sw", "loss = amortized-vdsw\namortized_kind = linear-attention\nk_proj = 4");
    write(dir, "t.cfg", &cfg);
    ok(dir, &["--timings", "train", "t.cfg", "--out-dir", "run"]);
    let report = read_report(&dir.join("run/report.json"));
    assert!(report.artifacts.iter().any(|a| a.ends_with("amortized.ckpt")));
    assert!(dir.join("run/amortized.ckpt").exists());
    assert!(report.timings_ms.is_some());
    assert!(fs::read_to_string(dir.join("run/history.jsonl")).unwrap().contains("wall_ms"));
}

#[test]
fn train_config_errors_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    for (name, text) in [
        ("loss.cfg", "loss = sinkhorn\n"),
        ("typo.cfg", "epohcs = 3\n"),
        ("value.cfg", "epochs = three\n"),
        ("dup.cfg", "epochs = 1\nepochs = 2\n"),
        ("lr.cfg", "lr = -1\n"),
        ("mixed.cfg", "data_dir = data\nm = 8\n"),
    ] {
        write(dir, name, text);
        assert_eq!(code(dir, &["train", name, "--out-dir", "o"]), 2, "{name}");
    }
    assert_eq!(code(dir, &["train", "absent.cfg", "--out-dir", "o"]), 4);

    // Clouds of different sizes in one data directory.
    fs::create_dir(dir.join("mixed")).unwrap();
    write(dir, "mixed/a.xyz", "1 2\n0 0\n");
    write(dir, "mixed/b.xyz", "2 2\n0 0\n1 1\n");
    write(dir, "shapes.cfg", "data_dir = mixed\nepochs = 1\n");
    assert_eq!(code(dir, &["train", "shapes.cfg", "--out-dir", "o"]), 2);
}

#[test]
fn gap_reports_one_row_per_method() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "g.cfg",
        "kinds = linear-attention\nt_list = 1\npairs = 50\nm = 16\nk_proj = 8\nepochs = 2\nprojections = 20\n",
    );
    let run = || {
        let stdout = ok(dir, &["gap", "g.cfg", "--out", "g.json"]);
        (stdout, fs::read(dir.join("g.json")).unwrap())
    };
    assert_eq!(run(), run());
    let report = read_report(&dir.join("g.json"));
    let methods: Vec<&str> = report.metrics.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["amortized-linear-attention", "vdsw-T1"]);
    write(dir, "bad.cfg", "kinds = transformer\n");
    assert_eq!(code(dir, &["gap", "bad.cfg"]), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen", "--kind", "plane-grid", "--n", "2", "--m", "32", "--out-dir", "c"]);
    let args = ["dist", "c/plane-grid-0000.xyz", "c/plane-grid-0001.xyz", "--metric", "vdsw", "--T", "5"];
    let default = ok(dir, &args);
    for threads in ["1", "3"] {
        let out = Command::new(env!("CARGO_BIN_EXE_swproj"))
            .args(args)
            .current_dir(dir)
            .env("SWPROJ_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), default);
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_swproj"))
        .args(args)
        .current_dir(dir)
        .env("SWPROJ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
