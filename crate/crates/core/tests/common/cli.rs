//! Drives the `gramstyle` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_gramstyle");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

/// Runs `args`, panicking with stderr on a non-zero exit.
pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "`gramstyle {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Synthesizes a corpus, ingests and splits it, and writes small-network
/// weights into `dir`.
pub fn prepare(dir: &Path, per_class: usize) {
    let img = dir.join("img");
    ok(&["synth", "--out", s(&img), "--per-class", &per_class.to_string(), "--seed", "5"]);
    ok(&[
        "ingest",
        "--images",
        s(&img),
        "--labels",
        s(&img.join("labels.csv")),
        "--out",
        s(&dir.join("all.json")),
    ]);
    ok(&[
        "split",
        "--manifest",
        s(&dir.join("all.json")),
        "--seed",
        "2",
        "--out-train",
        s(&dir.join("train.json")),
        "--out-val",
        s(&dir.join("val.json")),
    ]);
    ok(&["init-weights", "--arch", "small", "--seed", "3", "--out", s(&dir.join("w.nsw"))]);
}

/// Runs extraction, every training command and t-SNE, writing into `run`.
pub fn pipeline(data: &Path, run: &Path, workers: usize) {
    fs::create_dir_all(run).unwrap();
    let store = run.join("train.nsf");
    ok(&[
        "extract",
        "--manifest",
        s(&data.join("train.json")),
        "--weights",
        s(&data.join("w.nsw")),
        "--arch",
        "small",
        "--taps",
        "ReLU1_1,ReLU2_1,ReLU3_1",
        "--resize",
        "32",
        "--crop",
        "32",
        "--workers",
        &workers.to_string(),
        "--store",
        s(&store),
    ]);
    ok(&[
        "train-forest",
        "--store",
        s(&store),
        "--trees",
        "20",
        "--seed",
        "9",
        "--out",
        s(&run.join("forest.nsrf")),
    ]);
    ok(&[
        "train-linear",
        "--store",
        s(&store),
        "--epochs",
        "5",
        "--seed",
        "9",
        "--out",
        s(&run.join("linear.nsw")),
    ]);
    ok(&["pca", "--store", s(&store), "--out", s(&run.join("pca.nsw"))]);
    ok(&[
        "train-cnn",
        "--manifest",
        s(&data.join("train.json")),
        "--epochs",
        "1",
        "--size",
        "32",
        "--batch",
        "8",
        "--seed",
        "9",
        "--out",
        s(&run.join("cnn.nsw")),
    ]);
    ok(&[
        "tsne",
        "--store",
        s(&store),
        "--perplexity",
        "3",
        "--iters",
        "250",
        "--seed",
        "9",
        "--out",
        s(&run.join("tsne.csv")),
    ]);
}

/// Files produced by [`pipeline`] that must not depend on the run.
pub const ARTIFACTS: [&str; 12] = [
    "train.nsf",
    "train.nsf.csv",
    "forest.nsrf",
    "forest.nsrf.json",
    "linear.nsw",
    "linear.nsw.json",
    "pca.nsw",
    "pca.nsw.json",
    "cnn.nsw",
    "cnn.nsw.json",
    "tsne.csv",
    "tsne.csv.json",
];

/// Names of artifacts whose bytes differ between two runs.
pub fn differing(a: &Path, b: &Path) -> Vec<String> {
    ARTIFACTS
        .iter()
        .filter(|f| match (fs::read(a.join(f)), fs::read(b.join(f))) {
            (Ok(x), Ok(y)) => x != y,
            _ => true,
        })
        .map(|f| f.to_string())
        .collect()
}
