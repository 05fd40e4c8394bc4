use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn sdnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdnn"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn sdnn")
}

fn ok_json(args: &[&str]) -> Value {
    let out = sdnn(args);
    assert!(
        out.status.success(),
        "sdnn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Exit status and the structured error line of a failing invocation.
fn err_json(args: &[&str]) -> (i32, Value) {
    let out = sdnn(args);
    assert!(!out.status.success(), "sdnn {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    (out.status.code().unwrap(), serde_json::from_str(line).expect("error line is JSON"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn blobs_config() -> PathBuf {
    root().join("configs/blobs-quick.json")
}

/// A quick MNIST run config on the bundled subset, with absolute paths.
fn mnist_config(dir: &Path) -> PathBuf {
    let data = root().join("data/mnist-5k");
    let cfg = json!({
        "architecture": root().join("configs/mlp-784-128-10.json"),
        "plan": { "final_ratio": [0.5] },
        "train": { "s1": 1, "s2": 1, "cycle_count": 1, "batch_size": 32, "seed": 3,
                   "optimizer": { "learning_rate": 0.05, "momentum": 0.9 } },
        "data": {
            "source": "idx",
            "train_images": data.join("train-images-idx3-ubyte.gz"),
            "train_labels": data.join("train-labels-idx1-ubyte.gz"),
            "test_images": data.join("t10k-images-idx3-ubyte.gz"),
            "test_labels": data.join("t10k-labels-idx1-ubyte.gz"),
            "train_limit": 500,
            "test_limit": 200
        }
    });
    let path = dir.join("mnist-small.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn ght_recovers_a_planted_instance() {
    let tmp = TempDir::new().unwrap();
    let v = ok_json(&["ght", "--seed", "5", "--out", s(tmp.path())]);
    assert_eq!(v["k"], 3);
    assert_eq!(v["converged"], true);
    assert!(v["error_inf"].as_f64().unwrap() < 1e-6, "{v}");
    assert_eq!(v["support"].as_array().unwrap().len(), 3);
    let trace = std::fs::read_to_string(tmp.path().join("ght_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,"));
    assert_eq!(trace.lines().count(), 1 + v["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn ght_on_a_matrix_file() {
    let tmp = TempDir::new().unwrap();
    let m = tmp.path().join("a.txt");
    let b = tmp.path().join("b.txt");
    std::fs::write(&m, "4 4\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n").unwrap();
    std::fs::write(&b, "5 0.1 4 0.2\n").unwrap();
    let v = ok_json(&["ght", "--matrix", s(&m), "--rhs", s(&b), "--k", "2", "--step", "1", "--out", s(tmp.path())]);
    assert_eq!(v["x"], json!([5.0, 0.0, 4.0, 0.0]));
    assert_eq!(v["support"], json!([0, 2]));
    assert!(v["error_inf"].is_null());

    let (code, e) = err_json(&["ght", "--matrix", s(&m), "--rhs", s(&b), "--out", s(tmp.path())]);
    assert_eq!(code, 1);
    assert!(e["message"].as_str().unwrap().contains("--k"));
}

#[test]
fn train_writes_metrics_and_checkpoints() {
    let tmp = TempDir::new().unwrap();
    let v = ok_json(&["train", "--config", s(&blobs_config()), "--out", s(tmp.path())]);
    assert_eq!(v["status"]["status"], "completed");
    assert_eq!(v["epochs"], 15);
    assert_eq!(v["final_budgets"], json!([128, 32]));
    for (n, k) in v["final_nonzeros"].as_array().unwrap().iter().zip(v["final_budgets"].as_array().unwrap()) {
        assert!(n.as_u64() <= k.as_u64());
    }
    assert!(v["final_test_accuracy"].as_f64().unwrap() > 0.9);
    for f in ["metrics.csv", "summary.json", "model.sdnn", "model.dense.sdnn"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    let summary: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cycles"].as_array().unwrap().len(), 3);
    assert_eq!(
        summary["size"]["bitmask_bytes"].as_u64(),
        Some(std::fs::metadata(tmp.path().join("model.sdnn")).unwrap().len())
    );
}

#[test]
fn commands_are_deterministic_given_seed() {
    let runs: Vec<TempDir> = (0..3).map(|_| TempDir::new().unwrap()).collect();
    for (dir, seed) in runs.iter().zip(["21", "21", "22"]) {
        ok_json(&["train", "--config", s(&blobs_config()), "--seed", seed, "--out", s(dir.path())]);
    }
    let read = |d: &TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    for f in ["model.sdnn", "model.dense.sdnn", "metrics.csv", "summary.json"] {
        assert_eq!(read(&runs[0], f), read(&runs[1], f), "{f}");
    }
    assert_ne!(read(&runs[0], "model.sdnn"), read(&runs[2], "model.sdnn"));

    let a = ok_json(&["ght", "--seed", "9", "--out", s(runs[0].path())]);
    let b = ok_json(&["ght", "--seed", "9", "--out", s(runs[1].path())]);
    assert_eq!(a["x"], b["x"]);
}

#[test]
fn compress_then_inspect() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    ok_json(&["train", "--config", s(&blobs_config()), "--out", s(&run)]);

    let dense = run.join("model.dense.sdnn");
    let out = tmp.path().join("pruned.sdnn");
    let v = ok_json(&["compress", "--input", s(&dense), "--output", s(&out), "--ratio", "0.9", "--out", s(tmp.path())]);
    assert_eq!(v["output"], json!(out));
    // 10% of 512 and of 128 weights.
    assert_eq!(v["size"]["nonzeros"], 51 + 13);

    let i = ok_json(&["inspect", "--model", s(&out)]);
    assert_eq!(i["file_bytes"].as_u64(), Some(std::fs::metadata(&out).unwrap().len()));
    let layers = i["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 4);
    assert_eq!(layers[0]["parameters"], 512);
    assert_eq!(layers[0]["nonzeros"], 51);
    assert_eq!(layers[2]["nonzeros"], 13);
    assert_eq!(layers[1]["parameters"], 0);

    // Without a ratio the values pass through unchanged.
    let v = ok_json(&["compress", "--input", s(&dense), "--out", s(tmp.path())]);
    let same = tmp.path().join("model.sdnn");
    assert_eq!(v["output"], json!(same));
    let inspected = ok_json(&["inspect", "--model", s(&same)]);
    let original = ok_json(&["inspect", "--model", s(&run.join("model.sdnn"))]);
    assert_eq!(inspected["layers"], original["layers"]);
}

#[test]
fn eval_matches_the_training_report() {
    let tmp = TempDir::new().unwrap();
    let t = ok_json(&["train", "--config", s(&blobs_config()), "--out", s(tmp.path())]);
    let model = tmp.path().join("model.sdnn");
    let e = ok_json(&["eval", "--model", s(&model), "--config", s(&blobs_config())]);
    assert_eq!(e["total"], 100);
    // The checkpoint stores f32 values, so allow one borderline sample.
    let diff = (e["accuracy"].as_f64().unwrap() - t["final_test_accuracy"].as_f64().unwrap()).abs();
    assert!(diff <= 0.01, "{e} vs {t}");
}

#[test]
fn eval_on_idx_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = mnist_config(tmp.path());
    let run = tmp.path().join("run");
    let t = ok_json(&["train", "--config", s(&cfg), "--out", s(&run)]);
    assert!(t["final_test_accuracy"].as_f64().unwrap() > 0.5, "{t}");
    let data = root().join("data/mnist-5k");
    let e = ok_json(&[
        "eval",
        "--model",
        s(&run.join("model.sdnn")),
        "--arch",
        s(&root().join("configs/mlp-784-128-10.json")),
        "--images",
        s(&data.join("t10k-images-idx3-ubyte.gz")),
        "--labels",
        s(&data.join("t10k-labels-idx1-ubyte.gz")),
    ]);
    assert_eq!(e["total"], 1000);
    assert!(e["accuracy"].as_f64().unwrap() > 0.5);
}

#[test]
fn sweep_writes_one_row_per_ratio_in_order() {
    let tmp = TempDir::new().unwrap();
    let v = ok_json(&[
        "sweep",
        "--config",
        s(&blobs_config()),
        "--ratios",
        "0,0.5,0.9",
        "--jobs",
        "2",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(v["runs"], 3);
    assert_eq!(v["not_completed"], 0);
    let csv = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "ratio,final_train_acc,final_test_acc,nonzeros,bytes");
    let ratios: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ratios, ["0.0", "0.5", "0.9"]);
    for r in ["r0.000", "r0.500", "r0.900"] {
        assert!(tmp.path().join(r).join("model.sdnn").is_file(), "{r}");
    }
    let nonzeros: Vec<u64> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(nonzeros[0] > nonzeros[1] && nonzeros[1] > nonzeros[2]);
}

#[test]
fn failures_exit_nonzero_with_a_json_error_line() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let (code, e) = err_json(&["train", "--config", s(&missing), "--out", s(tmp.path())]);
    assert_eq!((code, e["error"].as_str()), (1, Some("io")));
    assert!(e["message"].as_str().unwrap().contains("nope.json"));

    let junk = tmp.path().join("junk.sdnn");
    std::fs::write(&junk, b"NOPE\x01\x00\x00\x00").unwrap();
    let (code, e) = err_json(&["inspect", "--model", s(&junk)]);
    assert_eq!((code, e["error"].as_str()), (1, Some("codec")));

    let (_, e) = err_json(&["sweep", "--config", s(&blobs_config()), "--ratios", "0.5,0.2", "--out", s(tmp.path())]);
    assert_eq!(e["error"], "config");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let (_, e) = err_json(&["train", "--config", s(&bad), "--out", s(tmp.path())]);
    assert_eq!(e["error"], "json");

    let (code, e) = err_json(&["frobnicate"]);
    assert_eq!((code, e["error"].as_str()), (2, Some("usage")));
    let (_, e) = err_json(&["--jobs", "0", "ght", "--out", s(tmp.path())]);
    assert_eq!(e["error"], "usage");
}
