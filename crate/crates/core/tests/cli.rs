//! End-to-end checks of the `magma` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use magma::harness::{read_trace_csv, OUT_DIR_ENV};

fn magma() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_magma"));
    cmd.env_remove(OUT_DIR_ENV);
    cmd
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SHORT_RUN: &str = r#"{
  "problem": {"quadratic": {"arrangement": "heterogeneous"}},
  "optimizer": {"kind": "adamw", "learning_rate": 0.01, "weight_decay": 0.0},
  "wrapper": {"mode": "magma"},
  "steps": 50,
  "seeds": [3]
}"#;

#[test]
fn help_is_available_everywhere() {
    for args in [
        vec!["--help"],
        vec!["run", "--help"],
        vec!["sweep", "--help"],
        vec!["verify", "--help"],
        vec!["diag", "--help"],
        vec!["diag", "condnum", "--help"],
        vec!["diag", "prop1", "--help"],
        vec!["diag", "descent", "--help"],
    ] {
        let out = magma().args(&args).output().unwrap();
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{args:?}");
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let malformed = write(dir.path(), "bad.json", "{ not json");
    let typo = write(dir.path(), "typo.json", &SHORT_RUN.replace("\"steps\"", "\"stepz\""));
    let out = dir.path().join("out");
    let cases: Vec<Vec<&std::ffi::OsStr>> = vec![
        vec!["run".as_ref(), "--config".as_ref(), missing.as_os_str(), "--out".as_ref(), out.as_os_str()],
        vec!["run".as_ref(), "--config".as_ref(), malformed.as_os_str(), "--out".as_ref(), out.as_os_str()],
        vec!["run".as_ref(), "--config".as_ref(), typo.as_os_str(), "--out".as_ref(), out.as_os_str()],
        vec!["run".as_ref(), "--bogus".as_ref()],
        vec!["verify".as_ref(), "--bogus".as_ref()],
        vec!["diag".as_ref(), "prop1".as_ref(), "--config".as_ref(), missing.as_os_str()],
        vec!["frobnicate".as_ref()],
    ];
    for args in cases {
        let out = magma().args(&args).output().unwrap();
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn repeated_runs_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SHORT_RUN);
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = magma()
            .args(["run", "--seed", "3", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        bytes.push(std::fs::read(out_dir.join("trace_seed3.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let trace = read_trace_csv(dir.path().join("a/trace_seed3.csv")).unwrap();
    assert_eq!(trace.records.len(), 50);
}

#[test]
fn divergence_is_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let text = SHORT_RUN.replace(r#""kind": "adamw", "learning_rate": 0.01, "weight_decay": 0.0"#, r#""kind": "sgd", "learning_rate": 10.0"#);
    let cfg = write(dir.path(), "div.json", &text);
    let out = magma().arg("run").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["diverged"], true);
    assert!(dir.path().join("summary_seed3.json").exists());
}

#[test]
fn out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SHORT_RUN);
    let target = dir.path().join("from_env");
    let out = magma().arg("run").arg("--config").arg(&cfg).env(OUT_DIR_ENV, &target).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("trace_seed3.csv").exists());
}

#[test]
fn p_tau_sweep_has_twelve_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &SHORT_RUN.replace("[3]", "[0, 1]"));
    let out = magma()
        .arg("sweep")
        .arg("--config")
        .arg(&cfg)
        .arg("--grid")
        .arg(configs().join("grid_p_tau.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["cells"], 12);
    assert_eq!(report["error_cells"], 0);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn diagnostics_on_shipped_configs() {
    let cfg = configs().join("quadratic_magma.json");
    let out = magma().args(["diag", "condnum", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["condition_number"].as_f64().unwrap() - 50.0).abs() < 1e-9);

    let out = magma().args(["diag", "prop1", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let exact = v["exact_expected_loss"].as_f64().unwrap();
    assert!(v["discrepancy"].as_f64().unwrap() <= 1e-10 * (1.0 + exact.abs()));

    let out = magma()
        .args(["diag", "descent", "--config"])
        .arg(configs().join("quadratic_sgd_audit.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["violations"], 0);
    assert_eq!(v["audited_steps"], 1000);
}

#[test]
fn quick_verify_passes() {
    let out = magma().args(["verify", "--quick"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.as_object().unwrap().values().all(|p| p["pass"] == true));
}
