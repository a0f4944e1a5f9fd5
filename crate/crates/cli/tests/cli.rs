use std::path::Path;
use std::process::{Command, Output};

fn fedgrid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedgrid"))
        .args(args)
        .current_dir(dir)
        .env("FEDGRID_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fedgrid(&["train"], dir.path()).status.code(), Some(2));
    assert_eq!(fedgrid(&["train", "--config", "nope.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"topology": {"num_nodes": 0}}"#);
    assert_eq!(fedgrid(&["gen-data", "--config", &cfg], dir.path()).status.code(), Some(2));
    let cfg = write_config(dir.path(), r#"{"unknown_key": 1}"#);
    assert_eq!(fedgrid(&["gen-data", "--config", &cfg], dir.path()).status.code(), Some(2));
}

#[test]
fn training_without_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"topology": {"num_nodes": 2}}"#);
    let out = dir.path().join("out");
    let missing = fedgrid(&["train", "--config", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(missing.status.code(), Some(3));
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("feeder.csv"), "timestamp,node_id,power_kw\n").unwrap();
    let o = fedgrid(&["train", "--config", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn runaway_learning_rate_is_reported_as_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"topology": {"num_nodes": 2}, "training": {"hyperparams": {"learning_rate": 1e6}}}"#,
    );
    let out = dir.path().join("out");
    let o = fedgrid(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stages_run_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"topology": {"num_nodes": 2}, "paths": {"out_dir": "artifacts"}}"#);
    for stage in ["gen-data", "train", "forecast", "grid-services", "report"] {
        let o = fedgrid(&[stage, "--config", &cfg, "--quiet"], dir.path());
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("artifacts");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["per_node"].as_array().unwrap().len(), 2);
    assert!(report["fleet_mean"].as_f64().unwrap() > 0.0);

    // a different seed is a different config; old artifacts must be refused
    let o = fedgrid(&["forecast", "--config", &cfg, "--seed", "9"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
