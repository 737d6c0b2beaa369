use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_competence-lab"));
    c.env_remove("COMPETENCE_LAB_OUT");
    c
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).unwrap()
}

fn write_config(dir: &Path, facet: &str, steps: u64) -> std::path::PathBuf {
    let path = dir.join(format!("{facet}.json"));
    let text = format!(r#"{{"environment":"builtin:playroom","facet":"{facet}","total_steps":{steps},"seed":1}}"#);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "diayn", 500);
    let v = stdout_json(&bin().args(["validate", "--config"]).arg(&cfg).output().unwrap());
    assert_eq!(v["valid"], true);
    assert_eq!(v["run_id"], "diayn-seed1");
}

#[test]
fn invalid_config_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"environment":"builtin:playroom","facet":"diayn","total_steps":0}"#).unwrap();
    let out = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    let v = stderr_json(&out);
    assert_eq!(out.status.code(), Some(1));
    assert!(v["error"]["kind"].is_string());
    assert!(v["error"]["message"].as_str().unwrap().len() > 0);

    let missing = bin().args(["run", "--config", "/nonexistent/x.json"]).output().unwrap();
    assert!(stderr_json(&missing)["error"]["kind"].is_string());
}

#[test]
fn usage_errors_exit_2_with_json() {
    let out = bin().args(["run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "diayn", 100);
    let out = bin().args(["run", "--seeds", "5..1", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_compare_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let mut run_dirs = Vec::new();
    for facet in ["effectance", "diayn"] {
        let cfg = write_config(dir.path(), facet, 2000);
        let v = stdout_json(
            &bin()
                .args(["run", "--seeds", "0..2", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&runs)
                .output()
                .unwrap(),
        );
        let listed = v["runs"].as_array().unwrap();
        assert_eq!(listed.len(), 2);
        for r in listed {
            let d = std::path::PathBuf::from(r["run_dir"].as_str().unwrap());
            for f in ["events.jsonl", "metrics.csv", "summary.json", "config.json"] {
                assert!(d.join(f).is_file(), "{}", d.join(f).display());
            }
            run_dirs.push(d);
        }
    }
    assert!(runs.join("diayn-seed1").is_dir());

    let cmp_out = dir.path().join("cmp");
    let v = stdout_json(&bin().arg("compare").args(&run_dirs).arg("--out").arg(&cmp_out).output().unwrap());
    assert_eq!(v["pairs"], 6);
    assert!(cmp_out.join("comparison.csv").is_file());
    assert!(cmp_out.join("summary.txt").is_file());

    let rep_out = dir.path().join("rep");
    let v = stdout_json(&bin().arg("report").arg(&run_dirs[0]).arg("--out").arg(&rep_out).output().unwrap());
    assert!(!v["files"].as_array().unwrap().is_empty());
    assert!(rep_out.join("index.html").is_file());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rig", 300);
    let v = stdout_json(
        &bin()
            .args(["run", "--seed", "9", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap(),
    );
    assert_eq!(v["runs"][0]["run_id"], "rig-seed9");
}

#[test]
fn environment_variable_sets_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("from-env");
    let cfg = write_config(dir.path(), "imrl", 300);
    let out = bin()
        .env("COMPETENCE_LAB_OUT", &root)
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    stdout_json(&out);
    assert!(root.join("imrl-seed1").join("events.jsonl").is_file());
}

#[test]
fn compare_needs_two_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["compare", "only-one", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    stderr_json(&out);
}
