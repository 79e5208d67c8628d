use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parahedge"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const BM_BOUNDS: &str = r#"{
  "experiment": "bounds",
  "model": {"family": "brownian", "d": 2},
  "domain": {"gamma": [1.0, 0.0], "k": 0.0},
  "payoff": {"family": "call", "strike": 0.5, "cap": 2.0},
  "x0": [1.0, 0.0],
  "horizon": 1.0,
  "checks": {"h0_samples": 2000, "det_max_n": 3, "det_cases_per_subset": 5,
             "t1_samples": 50, "beta_max_m": 1, "iterated_bound": false}
}"#;

const TANH_PRICE: &str = r#"{
  "experiment": "price",
  "model": {"family": "tanh1d", "base": 1.0, "amp": 0.2, "b": 0.1},
  "domain": {"gamma": [1.0], "k": 0.0},
  "payoff": {"family": "digital", "level": 0.5},
  "x0": [1.0],
  "horizon": 1.0,
  "montecarlo": {"n_paths": 500, "n_steps": 32}
}"#;

#[test]
fn brownian_bounds_report_zero_margin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bm.json", BM_BOUNDS);
    let out = dir.path().join("out");
    let o = bin().args(["bounds", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let crit = rep["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "convergence_criterion")
        .unwrap();
    assert_eq!(crit["detail"]["convergence_margin"].as_f64(), Some(0.0));
    assert!(out.join("bounds.txt").exists());
    assert!(out.join("constants.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("C6"));
}

#[test]
fn unknown_family_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = BM_BOUNDS.replace("\"brownian\"", "\"heston\"");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let o = bin().args(["bounds", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.family"), "{err}");
    assert!(err.contains("heston"), "{err}");
}

#[test]
fn bad_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let body = BM_BOUNDS.replace("\"d\": 2", "\"d\": \"two\"");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let o = bin().args(["bounds", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.d"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "price.json", TANH_PRICE);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = bin()
            .args(["price", "--seed", "7", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
        assert!(out.join("timing.json").exists());
    }
    assert_eq!(reports[0], reports[1]);

    let out = dir.path().join("c");
    bin().args(["price", "--seed", "8", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_ne!(std::fs::read(out.join("report.json")).unwrap(), reports[0]);
}

#[test]
fn kernel_dump_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "price.json", TANH_PRICE);
    let out = dir.path().join("k.csv");
    let o = bin().args(["kernel-dump", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() > 1);
    assert!(text.lines().next().unwrap().starts_with("t,"));
}
