use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn verify() -> Command {
    Command::new(env!("CARGO_BIN_EXE_verify"))
}

#[test]
fn run_processes_good_lines_and_reports_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    std::fs::write(
        &input,
        "{\"text\": \"Einstein published relativity in 1920\"}\nnot json\n{\"text\": \"Hello there!\"}\n",
    )
    .unwrap();
    let out = verify()
        .args(["run", "--config"])
        .arg(fixture("einstein/config.toml"))
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(&output)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["lines"], 3);
    assert_eq!(summary["processed"], 2);
    assert_eq!(summary["failed"][0]["line"], 2);
    assert_eq!(summary["corrections"]["SUBSTITUTE"], 1);

    let lines: Vec<Value> = std::fs::read_to_string(&output)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1]["error"].is_string());
    assert_eq!(lines[2]["e_score"], 1.0);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("einstein/config.toml")).unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, text.replace("reliability = 0.85", "reliability = 1.85")).unwrap();
    let out = verify().args(["serve", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sources[1].reliability"), "{err}");
}

#[test]
fn environment_overrides_config_scalars() {
    let out = verify()
        .env("VERIFY_PIPELINE_TAU_CONFIDENCE", "0.1")
        .args(["ablate", "--config"])
        .arg(fixture("einstein/config.toml"))
        .arg("--corpus")
        .arg(fixture("missing.jsonl"))
        .output()
        .unwrap();
    // The corpus is missing; the error must come from there, not the config.
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    let out = verify()
        .env("VERIFY_PIPELINE_TAU_CONFIDENCE", "seven")
        .args(["serve", "--config"])
        .arg(fixture("einstein/config.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("tau_confidence"));
}

#[test]
fn generate_evaluate_and_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    let out = verify().args(["gen-corpus", "--seed", "5", "--examples", "40", "--out"]).arg(&corpus_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(corpus_dir.join("corpus.jsonl")).unwrap().lines().count(), 40);

    let val = dir.path().join("val.jsonl");
    let rel = dir.path().join("reliability.csv");
    let out = verify()
        .arg("eval")
        .arg("--config")
        .arg(corpus_dir.join("config.toml"))
        .arg("--corpus")
        .arg(corpus_dir.join("corpus.jsonl"))
        .arg("--validation")
        .arg(&val)
        .arg("--reliability")
        .arg(&rel)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["examples"], 40);
    assert!(report["accuracy"].as_f64().unwrap() > report["pre_correction_accuracy"].as_f64().unwrap());
    assert!(std::fs::read_to_string(&rel).unwrap().starts_with("bin_mid,mean_conf,accuracy,count\n"));

    let out = verify().arg("calibrate").arg("--val").arg(&val).args(["--grid-step", "0.1"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cal: Value = serde_json::from_slice(&out.stdout).unwrap();
    let w = &cal["weights"];
    let sum = w["alpha"].as_f64().unwrap() + w["beta"].as_f64().unwrap() + w["gamma"].as_f64().unwrap();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(cal["temperature"].as_f64().unwrap() > 0.0);
}

#[test]
fn ablate_rejects_unknown_sources() {
    let out = verify()
        .args(["ablate", "--subsets", "kg|wiki", "--config"])
        .arg(fixture("synthetic/config.toml"))
        .arg("--corpus")
        .arg(fixture("synthetic/corpus.jsonl"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("wiki"));
}
