//! Exit codes and artifacts of the `localmix` binary.

use std::path::Path;
use std::process::Command;

fn localmix(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_localmix")).args(args).output().expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().expect("exit code"), text)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).expect("artifact exists")).expect("artifact is JSON")
}

#[test]
fn model_info_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, text) = localmix(&["model-info", "--builtin", "golden-r1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let model = json(&out.join("model.json"));
    assert_eq!(model["stage"], "model");
    assert!(text.contains("averaging_khat"));
}

#[test]
fn missing_config_exits_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, _) = localmix(&["run", "--config", dir.path().join("nope.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn invalid_model_exits_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flip.json");
    std::fs::write(
        &cfg,
        r#"{"subshift": {"n": 2, "t": [[0, 1], [1, 0]]}, "cocycle": {"depth": 0, "k_values": [[1.0], [1.0]], "psi": [1.0]}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, text) = localmix(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{text}");
    assert!(!out.exists());
}

#[test]
fn bad_time_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, _) = localmix(&["run", "--builtin", "golden-r1", "--t-grid", "64:8", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn unknown_builtin_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = localmix(&["model-info", "--builtin", "R9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn spectral_needs_the_rpf_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(localmix(&["model-info", "--builtin", "golden-r1", "--out", out]).0, 0);
    let (code, text) = localmix(&["spectral", "--builtin", "golden-r1", "--out", out]);
    assert_eq!(code, 2, "{text}");
    assert!(!dir.path().join("spectral.json").exists());
}

#[test]
fn stale_upstream_artifact_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(localmix(&["model-info", "--builtin", "golden-r1", "--out", out]).0, 0);
    assert_eq!(localmix(&["rpf", "--builtin", "golden-r2", "--out", out]).0, 2);
}

#[test]
fn staged_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for cmd in ["model-info", "rpf", "spectral", "oracle-check"] {
        let (code, text) = localmix(&[cmd, "--builtin", "golden-r1", "--out", out]);
        assert_eq!(code, 0, "{cmd}: {text}");
    }
    for f in ["model.json", "rpf.json", "gibbs.csv", "spectral.json", "oracle.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn lattice_model_runs_diagnostics_only() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = localmix(&["run", "--builtin", "full2-const", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["data"]["lattice"], true);
    assert_eq!(report["data"]["profile"], "diagnostics");
    assert!(report["data"]["skipped"]["mixing"].is_string());
    assert!(!dir.path().join("mixing.json").exists());
}

#[test]
fn time_grid_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = localmix(&["run", "--builtin", "golden-r1", "--t-grid", "64:512:4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let mixing = json(&dir.path().join("mixing.json"));
    assert_eq!(mixing["data"]["t_grid_override"], true);
    assert_eq!(mixing["data"]["t_grid"]["hi"], 512.0);
    let csv = std::fs::read_to_string(dir.path().join("mixing.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("zero-drift,")).count(), 4);
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = localmix(&[
        "run",
        "--builtin",
        "golden-r1",
        "--profile",
        "diagnostics",
        "--tolerance-scale",
        "1e-30",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{text}");
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["data"]["passed"], false);
}

#[test]
fn default_run_passes_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = localmix(&["run", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["data"]["model"], "R2A");
    assert_eq!(report["data"]["passed"], true);
    for f in ["model.json", "rpf.json", "spectral.json", "mixing.json", "mixing.csv", "oracle.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
