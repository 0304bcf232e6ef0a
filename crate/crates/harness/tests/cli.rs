//! Exit codes and output files of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn rpspectral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpspectral")).args(args).output().unwrap()
}

fn quick<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "--synthetic",
        "blobs",
        "--n",
        "90",
        "--siamese-epochs",
        "1",
        "--spectral-steps",
        "40",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn generate_writes_a_labelled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("moons.csv");
    let o = rpspectral(&["generate", "--kind", "moons", "--n", "40", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x0,x1,class");
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn pairs_and_run_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rpspectral(&["pairs", "--synthetic", "blobs", "--n", "90", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["positives.csv", "negatives.csv", "counts.json"] {
        assert!(Path::new(out).join(f).exists(), "{f}");
    }

    let mut args = vec!["run"];
    args.extend(quick(out, &["--method", "knn-k2"]));
    let o = rpspectral(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("knn-k2 run 0"));

    let results = dir.path().join("results.json");
    let again = dir.path().join("again");
    let o = rpspectral(&["report", "--results", results.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&results).unwrap(), std::fs::read(again.join("results.json")).unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rpspectral(&["run", "--out", out]);
    assert_eq!(code(&o), 2);
    let mut args = vec!["experiment"];
    args.extend(quick(out, &["--runs", "0"]));
    assert_eq!(code(&rpspectral(&args)), 2);
    let mut args = vec!["sweep"];
    args.extend(quick(out, &[]));
    let o = rpspectral(&args);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
}

#[test]
fn failing_runs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["experiment"];
    args.extend(quick(out, &["--method", "knn", "--k", "500", "--runs", "2"]));
    let o = rpspectral(&args);
    assert_eq!(code(&o), 1);
    assert!(dir.path().join("failures.json").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("pairing stage failed"));
}
