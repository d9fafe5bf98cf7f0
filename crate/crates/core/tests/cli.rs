use std::fs;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levy-coupling"))
}

fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn unknown_experiment_exits_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "samples = 10\n");
    let out = cli().args(["run", "--experiment", "no-such-thing", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lemma1-moments") && err.contains("coupling-rate"), "{err}");
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "samples = lots\n");
    let out = cli().args(["run", "--experiment", "lsigma-roundtrip", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("absent.conf");
    let out = cli().args(["run", "--experiment", "lsigma-roundtrip", "--config"]).arg(&missing).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn passing_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "# small run\nsamples = 10\n");
    let out_dir = dir.path().join("out");
    let out = cli()
        .args(["run", "--experiment", "lsigma-roundtrip", "--seed", "9", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["seed"], 9);
    assert!(fs::read_to_string(out_dir.join("results.csv")).unwrap().starts_with("name,kind,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn failing_check_exits_one() {
    // Two sub-steps per increment miss the residual-area variance badly.
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "d = 2\nn = 16\nsamples = 20000\nn_sub = 2\n");
    let out_dir = dir.path().join("out");
    let out = cli()
        .args(["run", "--experiment", "lemma1-moments", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
    assert!(!summary["failed"].as_array().unwrap().is_empty());
}

#[test]
fn overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "samples = 10\n");
    let out_dir = dir.path().join("out");
    let out = cli()
        .args(["run", "--experiment", "smap-roundtrip", "--override", "samples=3", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["samples"], "3");
}
