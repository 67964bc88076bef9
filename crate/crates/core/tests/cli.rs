//! End-to-end runs of the `ardlstm` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ardlstm::cli::{read_metrics, strip_wall_time};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ardlstm"))
        .args(args)
        .current_dir(dir)
        .env_remove("ARDLSTM_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

const SMALL: [&str; 6] = ["--units", "3", "--epochs", "22", "--mc-samples", "5"];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL).collect()
}

#[test]
fn generate_writes_designs_times_steps_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--out", "d"]);
    assert_eq!(rows(&dir.path().join("d/dataset.csv")), 7 * 41);
}

#[test]
fn train_writes_checkpoint_metrics_and_history() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--model", "lstm", "--units", "16", "--epochs", "300", "--out", "lstm"]);
    let m = read_metrics(dir.path().join("lstm/metrics.json")).unwrap();
    assert!((0.0..=1.0).contains(&m.r2), "{}", m.r2);
    assert_eq!(rows(&dir.path().join("lstm/history.csv")), 300);
    assert!(dir.path().join("lstm/checkpoint.bin").exists());

    ok(dir.path(), &with_small(&["train", "--model", "ard-lstm", "--out", "ard"]));
    let m = read_metrics(dir.path().join("ard/metrics.json")).unwrap();
    assert!(m.sparsity.is_some());
    // row 0 describes the untrained model
    assert_eq!(rows(&dir.path().join("ard/history.csv")), m.epochs + 1);
}

#[test]
fn width_list_trains_one_model_per_width() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--model", "lstm", "--units", "2,3,4", "--epochs", "3", "--out", "w"]);
    for n in [2, 3, 4] {
        let m = read_metrics(dir.path().join(format!("w/units-{n}/metrics.json"))).unwrap();
        assert_eq!(m.units, n);
    }
}

#[test]
fn repeated_train_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(dir.path(), &with_small(&["train", "--model", "ard-lstm", "--seed", "7", "--out", out]));
    }
    let read = |p: &str| strip_wall_time(serde_json::from_slice(&fs::read(dir.path().join(p)).unwrap()).unwrap());
    // the output directory is not recorded, so the documents compare directly
    assert_eq!(read("a/metrics.json"), read("b/metrics.json"));
    assert_eq!(fs::read(dir.path().join("a/checkpoint.bin")).unwrap(), fs::read(dir.path().join("b/checkpoint.bin")).unwrap());
    assert_eq!(fs::read(dir.path().join("a/history.csv")).unwrap(), fs::read(dir.path().join("b/history.csv")).unwrap());
}

#[test]
fn sweep_grid_sizes_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with_small(&["train", "--model", "ard-lstm", "--out", "ard"]));
    ok(dir.path(), &["sweep", "--out", "ard"]);
    assert_eq!(rows(&dir.path().join("ard/sweep.csv")), 100);
    ok(dir.path(), &["sweep", "--checkpoint", "ard/checkpoint.bin", "--out", "one", "--grid-points", "1"]);
    assert_eq!(rows(&dir.path().join("one/sweep.csv")), 1);
    let header = fs::read_to_string(dir.path().join("one/sweep.csv")).unwrap();
    assert!(header.starts_with("epsilon,sigma_norm,ei,extrapolation_flag"));

    let missing = run(dir.path(), &["sweep", "--checkpoint", "nowhere.bin"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[E_MISSING_CHECKPOINT]"));

    ok(dir.path(), &["train", "--model", "lstm", "--units", "2", "--epochs", "2", "--out", "lstm"]);
    let base = run(dir.path(), &["sweep", "--out", "lstm"]);
    assert!(String::from_utf8_lossy(&base.stderr).starts_with("error[E_NOT_SWEEPABLE]"));
}

#[test]
fn holdout_sweep_against_full_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with_small(&["train", "--model", "ard-lstm", "--out", "full"]));
    ok(dir.path(), &with_small(&["train", "--model", "ard-lstm", "--holdout", "40", "--out", "loo"]));
    ok(dir.path(), &["sweep", "--out", "loo", "--reference-checkpoint", "full/checkpoint.bin", "--grid-min", "-60", "--grid-max", "60", "--grid-points", "25"]);
    assert_eq!(rows(&dir.path().join("loo/sweep.csv")), 25);
    let bad = run(dir.path(), &with_small(&["train", "--holdout", "41", "--out", "x"]));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("holdout"));
}

#[test]
fn compare_statistics_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with_small(&["train", "--model", "ard-lstm", "--out", "ard"]));
    let cmp = ["compare", "--checkpoint", "ard/checkpoint.bin", "--timing-epochs", "1", "--reference-samples", "40", "--replicates", "3"];
    let mut runs = Vec::new();
    for out in ["c1", "c2"] {
        let args: Vec<&str> = cmp.iter().copied().chain(["--out", out]).collect();
        ok(dir.path(), &args);
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(out).join("compare.json")).unwrap()).unwrap();
        assert!(v["time_ratio"].as_f64().unwrap() > 0.0);
        runs.push(strip_wall_time(v));
    }
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].get("time_ratio").is_none());
}

#[test]
fn env_seed_applies_and_bad_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ardlstm"))
        .args(with_small(&["train", "--model", "lstm", "--out", "e"]))
        .current_dir(dir.path())
        .env("ARDLSTM_SEED", "banana")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ARDLSTM_SEED"));

    let out = Command::new(env!("CARGO_BIN_EXE_ardlstm"))
        .args(with_small(&["train", "--model", "lstm", "--out", "e"]))
        .current_dir(dir.path())
        .env("ARDLSTM_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_metrics(dir.path().join("e/metrics.json")).unwrap().config.seed, 9);
}

#[test]
fn config_file_is_read_and_unknown_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "model = \"lstm\"\nunits = 2\nepochs = 3\nout = \"from-file\"\n").unwrap();
    ok(dir.path(), &["train", "--config", "run.toml"]);
    let m = read_metrics(dir.path().join("from-file/metrics.json")).unwrap();
    assert_eq!((m.units, m.config.epochs), (2, 3));

    fs::write(dir.path().join("bad.toml"), "epochz = 3\n").unwrap();
    let out = run(dir.path(), &["train", "--config", "bad.toml"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E_CONFIG]"));
}
