mod common;

use common::cli::{self, code, ok};

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["extract", "--help"]), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["extract"]), 1);
    assert_eq!(code(&["split", "--manifest", "m.json", "--fraction", "abc"]), 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.nsrf");
    assert_eq!(code(&["eval", "--model", missing.to_str().unwrap()]), 2);
}

#[test]
fn bad_arguments_and_taps_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    cli::prepare(dir.path(), 2);
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let (train, w, store) = (p("train.json"), p("w.nsw"), p("f.nsf"));
    let extract = |taps: &str| {
        code(&[
            "extract", "--manifest", &train, "--weights", &w, "--arch", "small", "--taps", taps,
            "--resize", "32", "--crop", "32", "--store", &store,
        ])
    };
    assert_eq!(extract("ReLU7_1"), 1);
    assert_eq!(extract("ReLU1_1"), 0);
    let all = p("all.json");
    assert_eq!(
        code(&["split", "--manifest", &all, "--fraction", "1.5", "--out-train", &p("a"), "--out-val", &p("b")]),
        1
    );
}

#[test]
fn reruns_are_bytewise_identical() {
    let dir = tempfile::tempdir().unwrap();
    cli::prepare(dir.path(), 6);
    cli::pipeline(dir.path(), &dir.path().join("a"), 1);
    cli::pipeline(dir.path(), &dir.path().join("b"), 3);
    let diff = cli::differing(&dir.path().join("a"), &dir.path().join("b"));
    assert!(diff.is_empty(), "artifacts differ: {diff:?}");
}

#[test]
fn eval_reports_top1_and_per_class_recall() {
    let dir = tempfile::tempdir().unwrap();
    cli::prepare(dir.path(), 6);
    let run = dir.path().join("run");
    cli::pipeline(dir.path(), &run, 1);
    let p = |f: &std::path::Path| f.to_str().unwrap().to_string();
    let val_store = p(&run.join("val.nsf"));
    ok(&[
        "extract", "--manifest", &p(&dir.path().join("val.json")), "--weights",
        &p(&dir.path().join("w.nsw")), "--arch", "small", "--taps", "ReLU1_1,ReLU2_1,ReLU3_1",
        "--resize", "32", "--crop", "32", "--store", &val_store,
    ]);
    let out = ok(&["eval", "--model", &p(&run.join("forest.nsrf")), "--store", &val_store]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "split,metric,class,value");
    assert!(lines[1].starts_with("val,top1,,"));
    assert_eq!(lines.iter().filter(|l| l.contains(",recall,")).count(), 3);
}
