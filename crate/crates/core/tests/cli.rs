use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use driftsample::config::ExperimentConfig;
use driftsample::export::{BINARY_COLUMNS, CONTINUOUS_COLUMNS, DISCRETE_COLUMNS};
use tempfile::tempdir;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftsample")).args(args).output().expect("spawn driftsample")
}

fn run_config(sub: &str, name: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = configs().join(name);
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), sub];
    args.extend_from_slice(extra);
    run(&args)
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

#[test]
fn every_shipped_config_round_trips() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}

#[test]
fn simulate_discrete_writes_trace_and_summary() {
    let dir = tempdir().unwrap();
    let out = run_config("simulate", "save_then_spend.json", dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("trace.csv")), DISCRETE_COLUMNS.join(","));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let text = summary.to_string();
    assert!(text.contains("0.5765607"), "{text}");
}

#[test]
fn simulate_continuous_and_binary_headers() {
    let dir = tempdir().unwrap();
    assert!(run_config("simulate", "continuous_two_rate.json", dir.path(), &[]).status.success());
    assert_eq!(header(&dir.path().join("trace.csv")), CONTINUOUS_COLUMNS.join(","));
    let dir = tempdir().unwrap();
    assert!(run_config("simulate", "binary_tuned.json", dir.path(), &[]).status.success());
    assert_eq!(header(&dir.path().join("trace.csv")), BINARY_COLUMNS.join(","));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    for (sub, cfg) in
        [("simulate", "binary_tuned.json"), ("optimize", "lazy_discrete.json"), ("simulate", "two_rate.json")]
    {
        let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
        assert!(run_config(sub, cfg, a.path(), &[]).status.success());
        assert!(run_config(sub, cfg, b.path(), &[]).status.success());
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{cfg}: {n:?}");
        }
    }
}

#[test]
fn seed_flag_changes_binary_run() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    assert!(run_config("simulate", "binary_tuned.json", a.path(), &["--seed", "1"]).status.success());
    assert!(run_config("simulate", "binary_tuned.json", b.path(), &["--seed", "2"]).status.success());
    assert_ne!(fs::read(a.path().join("trace.csv")).unwrap(), fs::read(b.path().join("trace.csv")).unwrap());
}

#[test]
fn optimize_emits_json() {
    let dir = tempdir().unwrap();
    let out = run_config("optimize", "vstar.json", dir.path(), &["--json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("optimize.json")).unwrap()).unwrap();
    assert_eq!(doc, file);
    let value = doc["value"].as_f64().unwrap();
    assert!((value - 0.1968).abs() < 1e-3, "{value}");
}

#[test]
fn exit_codes() {
    let dir = tempdir().unwrap();
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--config", "/nonexistent.json", "simulate"]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 99, "model": {"family": "discrete", "rho": 1, "sigma": 1, "c": 1, "B": 1}}"#)
        .unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "simulate"]).status.code(), Some(1));

    let mismatch = dir.path().join("mismatch.json");
    fs::write(
        &mismatch,
        r#"{"schema_version": 1, "model": {"family": "binary", "eps": 0.1, "delta_sig": 0.2, "B": 1},
            "policy": {"kind": "schedule", "samples": [1.0], "periodic": true}}"#,
    )
    .unwrap();
    assert_eq!(run(&["--config", mismatch.to_str().unwrap(), "simulate"]).status.code(), Some(1));

    let out = run(&["--out", dir.path().to_str().unwrap(), "verify", "--criteria", "1,7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = run(&["--out", dir.path().to_str().unwrap(), "verify", "--criteria", "1,7", "--negative-control"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repro_prints_worked_example() {
    let dir = tempdir().unwrap();
    let out = run(&["--out", dir.path().to_str().unwrap(), "repro"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for n in ["0.618", "0.582", "0.576"] {
        assert!(text.contains(n), "{n} missing from\n{text}");
    }
    for f in ["fig1.csv", "fig2_reference.csv", "fig2_lazy.csv", "fig2_squares.csv", "fig3.csv", "repro.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
