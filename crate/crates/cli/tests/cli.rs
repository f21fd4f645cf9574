use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn cscopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cscopf")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn fixture_args() -> Vec<String> {
    vec![
        "--case".into(),
        data("wildfire9.json").display().to_string(),
        "--dynamics".into(),
        data("wildfire9_dynamics.json").display().to_string(),
        "--contingency".into(),
        data("wildfire9_contingency.json").display().to_string(),
    ]
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

fn train(dir: &Path) -> PathBuf {
    let fx = fixture_args();
    let o = cscopf(&with(&["train-tscp", "--estimate-tau", "4", "--out-dir", s(dir)], &fx));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("tscp_model.json")
}

#[test]
fn validate_reports_shapes() {
    let fx = fixture_args();
    let o = cscopf(&with(&["validate"], &fx));
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["result"]["buses"], 9);
    assert_eq!(v["result"]["contingency"]["outages"], serde_json::json!([5, 6]));

    let o = cscopf(&["validate", "--case", s(&data("case118.m"))]);
    let v = stdout_json(&o);
    assert_eq!((v["result"]["branches"].as_u64(), v["result"]["loads"].as_u64()), (Some(186), Some(99)));
}

#[test]
fn missing_sidecar_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_dynamics.json");
    let o = cscopf(&[
        "train-tscp",
        "--case",
        s(&data("wildfire9.json")),
        "--dynamics",
        s(&missing),
        "--contingency",
        s(&data("wildfire9_contingency.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "input");
    assert!(err["error"]["path"].as_str().unwrap().ends_with("no_such_dynamics.json"));
}

#[test]
fn unknown_mode_and_bad_flags_are_usage_errors() {
    let fx = fixture_args();
    assert_eq!(cscopf(&with(&["cscopf", "--mode", "scopf"], &fx)).status.code(), Some(64));
    assert_eq!(cscopf(&["cscopf", "--no-such-flag"]).status.code(), Some(64));
    assert_eq!(cscopf(&["frobnicate"]).status.code(), Some(64));
}

#[test]
fn three_modes_write_the_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path());
    let fx = fixture_args();
    let o = cscopf(&with(
        &["cscopf", "--tscp-model", s(&model), "--mode", "rtsced,tscopf,cscopf", "--out-dir", s(dir.path())],
        &fx,
    ));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("comparison.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let pattern: Vec<(&str, &str, &str)> = rows.iter().map(|r| (&r[0], &r[2], &r[3])).collect();
    assert_eq!(pattern, [("rtsced", "false", "false"), ("tscopf", "true", "false"), ("cscopf", "true", "true")]);
    for name in ["trajectories_pre.csv", "trajectories_cscopf.csv", "delta_p_cscopf.csv", "solution_tscopf.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let sol: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("solution_cscopf.json")).unwrap()).unwrap();
    assert_eq!(sol["schema_version"], 1);
    assert!(sol["result"].get("solve_time_s").is_none());
    assert!(sol["metadata"]["solve_time_s"].as_f64().is_some());
}

#[test]
fn reruns_are_identical_outside_metadata() {
    let fx = fixture_args();
    let run = |dir: &Path| {
        let model = train(dir);
        let o = cscopf(&with(&["cscopf", "--tscp-model", s(&model), "--mode", "tscopf,cscopf", "--out-dir", s(dir)], &fx));
        assert!(o.status.success());
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    for name in ["comparison.csv", "delta_p_cscopf.csv", "trajectories_tscopf.csv", "dataset.csv", "tscp_model.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    for name in ["solution_cscopf.json", "metrics.json"] {
        let strip = |p: &Path| {
            let mut v: Value = serde_json::from_str(&fs::read_to_string(p.join(name)).unwrap()).unwrap();
            v.as_object_mut().unwrap().remove("metadata");
            v
        };
        assert_eq!(strip(a.path()), strip(b.path()), "{name}");
    }
}

fn benign_contingency(dir: &Path) -> PathBuf {
    let p = dir.join("benign.json");
    fs::write(
        &p,
        r#"{"id": "benign", "sequence": {"events": [
            {"t": 0.2, "kind": "apply_fault", "branch": 1, "pos": 0.9},
            {"t": 0.22, "kind": "clear_fault", "branch": 1, "pos": 0.9}]}}"#,
    )
    .unwrap();
    p
}

#[test]
fn stable_fixture_trains_a_zero_model_and_needs_no_redispatch() {
    let dir = tempfile::tempdir().unwrap();
    let benign = benign_contingency(dir.path());
    let (case, dynamics) = (data("wildfire9.json"), data("wildfire9_dynamics.json"));
    let common = [
        "--case",
        s(&case),
        "--dynamics",
        s(&dynamics),
        "--contingency",
        s(&benign),
        "--out-dir",
        s(dir.path()),
    ];
    let o = cscopf(&[&["train-tscp", "--n", "5", "--sigma", "0"][..], &common[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("tscp_model.json")).unwrap()).unwrap();
    assert!(model["theta"].as_array().unwrap().iter().all(|t| t.as_f64() == Some(0.0)));
    assert_eq!(model["theta0"].as_f64(), Some(0.0));
    assert_eq!(stdout_json(&o)["result"]["metrics"]["r2"].as_f64(), Some(1.0));

    let model_path = dir.path().join("tscp_model.json");
    let o = cscopf(&[&["cscopf", "--tscp-model", s(&model_path)][..], &common[..]].concat());
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let dp = v["result"]["modes"][0]["delta_p"].as_array().unwrap();
    assert!(dp.iter().all(|d| d.as_f64() == Some(0.0)), "{dp:?}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(data("wildfire9.json"), dir.path().join("case.json")).unwrap();
    fs::copy(data("wildfire9_dynamics.json"), dir.path().join("dyn.json")).unwrap();
    fs::copy(data("wildfire9_contingency.json"), dir.path().join("cont.json")).unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"case": "case.json", "dynamics": "dyn.json", "contingency": "cont.json",
            "output_dir": "out", "sampling": {"n": 30, "seed": 4}, "sime": {"tau": 0.5}}"#,
    )
    .unwrap();
    let o = cscopf(&["train-tscp", "--config", s(&cfg), "--n", "12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["samples"], 12);
    assert_eq!(v["result"]["seed"], 4);
    assert_eq!(v["result"]["tau"].as_f64(), Some(0.5));
    assert!(dir.path().join("out/tscp_model.json").exists());

    fs::write(&cfg, r#"{"case": "case.json", "sampling": {"n": 0}}"#).unwrap();
    let o = cscopf(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, r#"{"cases": "case.json"}"#).unwrap();
    assert_eq!(cscopf(&["validate", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn eval_reads_the_cached_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path());
    let o = cscopf(&["eval-tscp", "--tscp-model", s(&model), "--dataset", s(&dir.path().join("dataset.csv"))]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["result"]["rows"], 200);
    assert!(v["result"]["metrics"]["r2"].as_f64().unwrap() > 0.9);
}

#[test]
fn sensitivity_and_screening_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = cscopf(&["ptdf", "--case", s(&data("wildfire9.json")), "--out-dir", s(dir.path())]);
    assert!(o.status.success());
    let ptdf = fs::read_to_string(dir.path().join("ptdf.csv")).unwrap();
    assert!(ptdf.starts_with("branch,bus_1"));
    assert_eq!(ptdf.lines().count(), 1 + stdout_json(&o)["result"]["base_flows"].as_array().unwrap().len());

    let o = cscopf(&["ft", "--case", s(&data("wildfire9.json")), "--contingency", s(&data("wildfire9_contingency.json"))]);
    assert!(o.status.success());
    let cuts = stdout_json(&o)["result"]["saturated_cuts"].as_array().unwrap().clone();
    assert!(!cuts.is_empty());
    assert!(cuts.iter().all(|c| c["utilization"].as_f64().unwrap() > 0.98));

    let fx = fixture_args();
    let o = cscopf(&with(&["tds", "--out-dir", s(dir.path())], &fx));
    assert!(o.status.success());
    assert!(stdout_json(&o)["result"]["assessment"]["tsi"].as_f64().unwrap() < 0.0);
    assert!(fs::read_to_string(dir.path().join("trajectories.csv")).unwrap().starts_with("time,"));
}
