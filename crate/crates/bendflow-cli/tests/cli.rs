//! End-to-end runs of the `bendflow` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bendflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bendflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_preset(dir: &Path, format: &str) -> Output {
    bendflow(&[
        "preset",
        "--name",
        "subconverge",
        "--n",
        "32",
        "--tau",
        "0.01",
        "--T",
        "0.2",
        "--format",
        format,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn elastica_prints_constants() {
    let out = bendflow(&["elastica"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["c0"].as_f64().unwrap() - 2.396_280_469_471_184).abs() <= 1e-12);
    assert!((v["two_over_c0"].as_f64().unwrap() - 0.834_627).abs() <= 1e-6);
    assert!(v.get("tables").is_none());
    let out = bendflow(&["elastica", "--table"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["tables"]["g"].as_array().unwrap().len(), 41);
}

#[test]
fn preset_writes_outputs_and_analyze_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_preset(dir.path(), "json");
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("[subconverge] PASS energy-descent"));
    assert!(text.contains("verdict"));
    for f in ["trajectory.json", "diagnostics.json", "timeseries.csv"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }

    let again = dir.path().join("again");
    let out = bendflow(&[
        "analyze",
        dir.path().join("trajectory.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    // same seed, same trajectory: the report is reproduced exactly
    assert_eq!(
        fs::read_to_string(again.join("diagnostics.json")).unwrap(),
        fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()
    );
}

#[test]
fn run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[grid]\nn = 32\n[obstacle]\ntype = \"cone\"\nslope = 1.0\noffset = 0.25\n[initial]\ntype = \"sine\"\namplitude = 0.3\n[flow]\ntau = 0.01\nT = 0.1\n",
    )
    .unwrap();
    let out = bendflow(&["run", "--config", cfg.to_str().unwrap(), "--T", "0.05"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("steps = 5"));
}

#[test]
fn failed_checks_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_preset(dir.path(), "json")), 0);
    let path = dir.path().join("trajectory.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let e = v["diagnostics"][5]["energy"].as_f64().unwrap();
    v["diagnostics"][5]["energy"] = serde_json::json!(e + 1.0);
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let out = bendflow(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL energy-descent"));
}

#[test]
fn errors_and_usage() {
    assert_eq!(code(&bendflow(&[])), 64);
    assert_eq!(code(&bendflow(&["preset", "--name", "nonsense"])), 64);
    assert_eq!(code(&bendflow(&["preset", "--name", "blowup", "--obstacle", "pyramid"])), 64);
    assert_eq!(code(&bendflow(&["--version"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let missing = bendflow(&["run", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.toml"));

    // a CSV trajectory has no iterates to re-analyze
    assert_eq!(code(&small_preset(dir.path(), "csv")), 0);
    let out = bendflow(&["analyze", dir.path().join("trajectory.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}
