#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_knotpair");

/// A small synthetic run: ten boards and a narrow network, so the whole
/// pipeline finishes in seconds.
pub const SMALL_CONFIG: &str = r#"{
  "seed": 11,
  "synth": { "n_specimens": 10, "knots_per_specimen": [4, 6] },
  "train": {
    "variant": "learnable_weights",
    "epochs": 5,
    "architecture": { "hidden": [16, 8], "embedding_dim": 4, "dropout_layers": 1, "projection": [4, 2] }
  }
}"#;

/// Runs the binary in `dir` and returns its output.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "knotpair {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// The JSON error line printed on failure.
pub fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("last stderr line is JSON")
}

/// synth, extract, triplets, train, embed, cluster, eval and viz in `dir`,
/// all with paths relative to it.
pub fn pipeline(dir: &Path) {
    fs::write(dir.join("config.json"), SMALL_CONFIG).unwrap();
    fn with<'a>(rest: &[&'a str]) -> Vec<&'a str> {
        [&["--config", "config.json"][..], rest].concat()
    }
    ok(dir, &with(&["synth", "--out", "data"]));
    ok(dir, &with(&["extract", "--data", "data", "--out", "work"]));
    ok(dir, &with(&["triplets", "--features", "work/features.csv", "--out", "work"]));
    ok(
        dir,
        &with(&[
            "train",
            "--features",
            "work/features.csv",
            "--split",
            "work/split.csv",
            "--triplets",
            "work/triplets.csv",
            "--out",
            "work",
        ]),
    );
    ok(
        dir,
        &with(&["embed", "--model", "work/model.json", "--features", "work/features.csv", "--out", "work"]),
    );
    ok(
        dir,
        &with(&[
            "cluster",
            "--embeddings",
            "work/embeddings.csv",
            "--features",
            "work/features.csv",
            "--split",
            "work/split.csv",
            "--out",
            "work",
        ]),
    );
    ok(
        dir,
        &with(&[
            "eval",
            "--model",
            "work/model.json",
            "--features",
            "work/features.csv",
            "--split",
            "work/split.csv",
            "--out",
            "work",
        ]),
    );
    ok(
        dir,
        &with(&["viz", "--embeddings", "work/embeddings.csv", "--pairings", "work/pairings.csv", "--out", "work"]),
    );
}

/// Every file under `root`, keyed by its relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}
