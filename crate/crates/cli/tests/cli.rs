use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbc"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("spawn kbc")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two chains of 12 entities with a forward and a backward relation; every
/// fifth forward edge is held out for valid/test.
fn write_raw(dir: &Path, chains: usize) {
    fs::create_dir_all(dir).unwrap();
    let (mut train, mut valid, mut test) = (String::new(), String::new(), String::new());
    let mut k = 0;
    for c in 0..chains {
        for i in 0..11 {
            let (a, b) = (format!("c{c}n{i}"), format!("c{c}n{}", i + 1));
            train.push_str(&format!("{b}\tprev\t{a}\n"));
            let line = format!("{a}\tnext\t{b}\n");
            match k % 5 {
                1 if i > 0 => valid.push_str(&line),
                3 if i > 0 => test.push_str(&line),
                _ => train.push_str(&line),
            }
            k += 1;
        }
    }
    fs::write(dir.join("train.txt"), train).unwrap();
    fs::write(dir.join("valid.txt"), valid).unwrap();
    fs::write(dir.join("test.txt"), test).unwrap();
}

fn prepared(root: &Path, chains: usize) -> PathBuf {
    let raw = root.join(format!("raw{chains}"));
    let data = root.join(format!("data{chains}"));
    write_raw(&raw, chains);
    let out = kbc(&["prepare-data", "--input", s(&raw), "--output", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data
}

fn train_config(data: &Path, out: &Path, epochs: i64, lr: f64) -> String {
    serde_json::json!({
        "dataset": data,
        "output_dir": out,
        "train": {
            "model": {"variant": "complex", "rank": 8, "seed": 3},
            "formulation": "reciprocal",
            "regularizer": {"variant": "n3", "lambda": 0.001},
            "batch_size": 16,
            "epochs": epochs,
            "learning_rate": lr,
            "eval_every": 5
        }
    })
    .to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn prepare_counts_and_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 2);
    let manifest = read_json(&data.join("manifest.json"));
    assert_eq!(manifest["num_entities"], 24);
    assert_eq!(manifest["num_predicates"], 2);
    assert_eq!(manifest["counts"]["valid"], 4);
    assert_eq!(manifest["counts"]["test"], 4);
    assert_eq!(manifest["counts"]["train"], 44 - 8);
    for f in ["train.kbc", "valid.kbc", "test.kbc", "entities.tsv", "predicates.tsv"] {
        assert!(data.join(f).is_file(), "{f}");
    }

    let before = fs::metadata(data.join("train.kbc")).unwrap().modified().unwrap();
    let raw = dir.path().join("raw2");
    let out = kbc(&["prepare-data", "--input", s(&raw), "--output", s(&data)]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("reusing"), "{}", stderr(&out));
    assert_eq!(fs::metadata(data.join("train.kbc")).unwrap().modified().unwrap(), before);

    // Changing a raw file invalidates the cache.
    fs::write(raw.join("test.txt"), "c0n0\tnext\tc0n1\n").unwrap();
    let out = kbc(&["prepare-data", "--input", s(&raw), "--output", s(&data)]);
    assert_eq!(code(&out), 0);
    assert!(!stderr(&out).contains("reusing"));
    assert_eq!(read_json(&data.join("manifest.json"))["counts"]["test"], 1);
}

#[test]
fn prepare_missing_file_lists_expected_names() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    write_raw(&raw, 1);
    fs::remove_file(raw.join("test.txt")).unwrap();
    let out = kbc(&["prepare-data", "--input", s(&raw), "--output", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("missing test.txt"), "{err}");
    assert!(err.contains("train.txt, valid.txt, test.txt"), "{err}");
}

#[test]
fn prepare_rejects_unseen_symbols_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    write_raw(&raw, 1);
    fs::write(raw.join("test.txt"), "c0n0\tnext\tstranger\n").unwrap();
    let out = kbc(&["prepare-data", "--input", s(&raw), "--output", s(&dir.path().join("a"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("stranger"));
    let out = kbc(&[
        "prepare-data",
        "--input",
        s(&raw),
        "--output",
        s(&dir.path().join("b")),
        "--allow-unseen",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&dir.path().join("b/manifest.json"))["num_entities"], 13);
}

#[test]
fn train_validation_errors_are_exhaustive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, train_config(&dir.path().join("nowhere"), &dir.path().join("out"), 0, -0.1)).unwrap();
    let out = kbc(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("epochs must be > 0"), "{err}");
    assert!(err.contains("learning_rate"), "{err}");
    assert!(err.contains("dataset"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn train_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 1);
    let mut v: Value = serde_json::from_str(&train_config(&data, &dir.path().join("o"), 1, 0.1)).unwrap();
    v["train"]["epoch"] = 3.into();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, v.to_string()).unwrap();
    let out = kbc(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("epoch"), "{}", stderr(&out));
}

#[test]
fn train_eval_roundtrip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 2);
    let mut records = Vec::new();
    for name in ["a", "b"] {
        let cfg = dir.path().join(format!("{name}.json"));
        fs::write(&cfg, train_config(&data, &dir.path().join(name), 20, 0.1)).unwrap();
        let out = kbc(&["train", "--config", s(&cfg)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stderr(&out).contains("epoch"), "per-epoch progress expected");
        records.push(read_json(&dir.path().join(name).join("record.json")));
    }
    let (a, b) = (&records[0], &records[1]);
    assert_eq!(a["status"], "completed");
    assert_eq!(a["history"], b["history"]);
    assert_eq!(a["valid"], b["valid"]);
    assert_eq!(a["test"], b["test"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["conventions"]["batch_loss_reduction"], "sum");
    assert_eq!(a["data_fingerprint"].as_object().unwrap().len(), 4);
    let evals = a["history"]["epochs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| !e["valid_mrr"].is_null())
        .count();
    assert_eq!(evals, 4);

    let run = dir.path().join("a");
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,penalty,valid_mrr\n"));
    assert_eq!(history.lines().count(), 21);

    let out = kbc(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.kbcm")),
        "--data",
        s(&data),
        "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(result, a["test"]);
    assert_eq!(result["n_queries"], 8);

    let out = kbc(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.kbcm")),
        "--data",
        s(&data),
        "--split",
        "valid",
        "--by-type",
        "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let breakdown = result["breakdown"].as_object().unwrap();
    let total: u64 = breakdown.values().map(|m| m["n_queries"].as_u64().unwrap()).sum();
    assert_eq!(total + result["uncategorized"].as_u64().unwrap(), 8);

    let out = kbc(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.kbcm")),
        "--data",
        s(&data),
        "--by-type",
        "--raw",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("raw"));
}

#[test]
fn eval_dimension_mismatch_is_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let small = prepared(dir.path(), 1);
    let large = prepared(dir.path(), 2);
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, train_config(&small, &dir.path().join("o"), 1, 0.1)).unwrap();
    assert_eq!(code(&kbc(&["train", "--config", s(&cfg)])), 0);
    let out = kbc(&[
        "eval",
        "--checkpoint",
        s(&dir.path().join("o/model.kbcm")),
        "--data",
        s(&large),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("N=12"), "{}", stderr(&out));
}

#[test]
fn toml_config_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    prepared(dir.path(), 1);
    let toml = r#"
dataset = "data1"
output_dir = "runs/t"

[train]
formulation = "standard"
batch_size = 8
epochs = 2
learning_rate = 0.1

[train.model]
variant = "cp"
rank = 4

[train.regularizer]
variant = "fro"
lambda = 0.01
"#;
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, toml).unwrap();
    let out = kbc(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("runs/t/record.json").is_file());
}

fn grid_spec(data: &Path, out: &Path) -> String {
    serde_json::json!({
        "dataset": data,
        "output_dir": out,
        "base": {
            "model": {"variant": "cp", "rank": 6},
            "formulation": "reciprocal",
            "regularizer": {"variant": "n3", "lambda": 0.0},
            "batch_size": 16,
            "epochs": 3,
            "learning_rate": 0.1
        },
        "axes": {
            "learning_rate": [0.1, 0.01],
            "regularizer.lambda": [0.0, 0.01]
        }
    })
    .to_string()
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

#[test]
fn grid_runs_resumes_and_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 2);
    let out_dir = dir.path().join("grid");
    let spec = dir.path().join("grid.json");
    fs::write(&spec, grid_spec(&data, &out_dir)).unwrap();

    let out = kbc(&["grid", "--spec", s(&spec)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("grid: 4 runs"));
    assert!(stdout(&out).contains("best:"));
    let dirs = run_dirs(&out_dir);
    assert_eq!(dirs.len(), 4);
    for d in &dirs {
        assert_eq!(read_json(&d.join("record.json"))["status"], "completed");
        assert_eq!(d.file_name().unwrap().len(), 12);
    }

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(summary.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let mrrs: Vec<f64> = rows.iter().map(|r| r[col("valid_mrr")].parse().unwrap()).collect();
    assert!(mrrs.windows(2).all(|w| w[0] >= w[1]), "{mrrs:?}");
    let lambdas: Vec<&str> = rows.iter().map(|r| &r[col("regularizer.lambda")]).collect();
    assert_eq!(lambdas.iter().filter(|l| **l == "0.0").count(), 2);

    // Untouched rerun does no work.
    let record_before = fs::read_to_string(dirs[0].join("record.json")).unwrap();
    let out = kbc(&["grid", "--spec", s(&spec)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stderr(&out).matches("already complete").count(), 4);
    assert_eq!(fs::read_to_string(dirs[0].join("record.json")).unwrap(), record_before);

    // Interrupted cell: only it runs again.
    fs::remove_file(dirs[1].join("record.json")).unwrap();
    let out = kbc(&["grid", "--spec", s(&spec)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stderr(&out).matches("already complete").count(), 3);
    assert!(dirs[1].join("record.json").is_file());
}

#[test]
fn lambda_zero_cell_matches_unregularized_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 1);
    let out_dir = dir.path().join("grid");
    let spec = dir.path().join("grid.json");
    let mut v: Value = serde_json::from_str(&grid_spec(&data, &out_dir)).unwrap();
    v["axes"] = serde_json::json!({"regularizer.lambda": [0.0]});
    fs::write(&spec, v.to_string()).unwrap();
    assert_eq!(code(&kbc(&["grid", "--spec", s(&spec)])), 0);
    let grid_record = read_json(&run_dirs(&out_dir)[0].join("record.json"));

    let mut train = v["base"].clone();
    train["regularizer"] = serde_json::json!({"variant": "none"});
    let cfg = dir.path().join("plain.json");
    let plain = dir.path().join("plain");
    fs::write(&cfg, serde_json::json!({"dataset": data, "output_dir": plain, "train": train}).to_string()).unwrap();
    assert_eq!(code(&kbc(&["train", "--config", s(&cfg)])), 0);
    let plain_record = read_json(&plain.join("record.json"));
    assert_eq!(grid_record["valid"], plain_record["valid"]);
    assert_eq!(grid_record["test"], plain_record["test"]);
}

#[test]
fn grid_validates_every_cell_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 1);
    let out_dir = dir.path().join("grid");
    let spec = dir.path().join("grid.json");
    let mut v: Value = serde_json::from_str(&grid_spec(&data, &out_dir)).unwrap();
    v["axes"]["epochs"] = serde_json::json!([2, 0]);
    fs::write(&spec, v.to_string()).unwrap();
    let out = kbc(&["grid", "--spec", s(&spec)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("epochs=0"), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn grid_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path(), 1);
    let out_dir = dir.path().join("grid");
    let spec = dir.path().join("grid.json");
    let mut v: Value = serde_json::from_str(&grid_spec(&data, &out_dir)).unwrap();
    // Scores overflow to a non-finite loss.
    v["base"]["model"]["init_scale"] = 1e200.into();
    v["axes"] = serde_json::json!({"model.rank": [2, 3]});
    fs::write(&spec, v.to_string()).unwrap();
    let out = kbc(&["grid", "--spec", s(&spec)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let dirs = run_dirs(&out_dir);
    assert_eq!(dirs.len(), 2);
    for d in &dirs {
        let r = read_json(&d.join("record.json"));
        assert_eq!(r["status"], "failed");
        assert!(r["error"].as_str().unwrap().contains("diverged"), "{r}");
    }
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn verify_json_report_passes() {
    let out = kbc(&["verify", "--json", "--restarts", "20"]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    let mid = report["certificate"]["midpoint_value"].as_f64().unwrap();
    assert!((mid - 2f64.sqrt()).abs() < 1e-4, "{mid}");
}

#[test]
fn verify_text_and_seed_override() {
    let out = kbc(&["verify", "--seed", "7", "--restarts", "20"]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("PASS"));
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&kbc(&["frobnicate"])), 1);
    assert_eq!(code(&kbc(&["eval", "--checkpoint", "x", "--data", "y", "--split", "dev"])), 1);
    assert_eq!(code(&kbc(&["verify", "--restarts", "0"])), 1);
    assert_eq!(code(&kbc(&["--help"])), 0);
}
