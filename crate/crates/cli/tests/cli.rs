use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn riskmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskmdp")).args(args).env_remove("RISKMDP_THREADS").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn export(dir: &Path) {
    let p = dir.to_str().unwrap();
    assert!(riskmdp(&["fixtures", "export", "--dir", p]).status.success());
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path());
    let good = dir.path().join("jaquette.json");
    let out = riskmdp(&["validate", "--model", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["valid"], true);

    let text = std::fs::read_to_string(&good).unwrap().replacen("0.5", "0.7", 1);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let out = riskmdp(&["validate", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["violations"][0]["pointer"].as_str().unwrap().starts_with("/transitions/"));

    let missing = dir.path().join("missing.json");
    assert_eq!(riskmdp(&["validate", "--model", missing.to_str().unwrap()]).status.code(), Some(2));
    let m = missing.to_str().unwrap();
    assert_eq!(riskmdp(&["solve", "--model", m, "--criterion", "risk_neutral"]).status.code(), Some(2));
}

#[test]
fn unsupported_combinations_exit_4() {
    let ergodic = riskmdp(&["solve", "--model", "fixture:jaquette", "--criterion", "ergodic_entropic", "--gamma", "1"]);
    assert_eq!(ergodic.status.code(), Some(4));
    let no_param = riskmdp(&["solve", "--model", "fixture:jaquette", "--criterion", "recursive_oce"]);
    assert_eq!(no_param.status.code(), Some(4));
    let bad_gamma = riskmdp(&["solve", "--model", "fixture:jaquette", "--criterion", "recursive_oce", "--gamma=-1"]);
    assert_eq!(bad_gamma.status.code(), Some(1));
}

#[test]
fn sandwich_tolerance_failure_exits_3() {
    let out = riskmdp(&[
        "solve",
        "--model",
        "fixture:jaquette",
        "--criterion",
        "total_oce",
        "--alpha",
        "0.2",
        "--tail-eps",
        "0.5",
        "--tol",
        "1e-12",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_rows_and_usage_errors() {
    let v = json(&riskmdp(&[
        "compare",
        "--model",
        "fixture:jaquette",
        "--criteria",
        "risk_neutral,recursive_oce,total_oce,recursive_oce",
        "--gamma",
        "1",
    ]));
    let rows = v["rows"].as_array().unwrap();
    let got: Vec<(&str, &str)> =
        rows.iter().map(|r| (r["criterion"].as_str().unwrap(), r["action"].as_str().unwrap())).collect();
    assert_eq!(got, [("risk_neutral", "b1"), ("recursive_oce", "b2"), ("total_oce", "b2")]);
    assert!((rows[0]["value"].as_f64().unwrap() - 8.0 / 3.0).abs() < 1e-12);

    assert_eq!(riskmdp(&["compare", "--model", "fixture:jaquette", "--criteria", ""]).status.code(), Some(64));
    assert_eq!(riskmdp(&["compare", "--model", "fixture:jaquette"]).status.code(), Some(64));
}

#[test]
fn tsv_report_layout() {
    let out = riskmdp(&[
        "solve",
        "--model",
        "fixture:jaquette",
        "--criterion",
        "total_oce",
        "--gamma",
        "1",
        "--format",
        "tsv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# criterion\ttotal_oce\n"));
    assert!(text.contains("state\tvalue\taction\tstage0\n"));
    assert!(text.lines().any(|l| l.starts_with("1\t") && l.ends_with("\tb1\tb2")));
}

#[test]
fn simulate_from_a_saved_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let r = report.to_str().unwrap();
    let out =
        riskmdp(&["solve", "--model", "fixture:jaquette", "--criterion", "total_oce", "--gamma", "1", "--out", r]);
    assert!(out.status.success() && out.stdout.is_empty());
    let from_file = json(&riskmdp(&[
        "simulate",
        "--model",
        "fixture:jaquette",
        "--policy",
        r,
        "--functional",
        "entropic",
        "--gamma",
        "1",
        "--reps",
        "5000",
    ]));
    let solved = json(&riskmdp(&[
        "simulate",
        "--model",
        "fixture:jaquette",
        "--criterion",
        "total_oce",
        "--functional",
        "entropic",
        "--gamma",
        "1",
        "--reps",
        "5000",
    ]));
    assert_eq!(from_file["value"], solved["value"]);
    assert_eq!(from_file["replications"], 5000);
}

#[test]
fn fixtures_round_trip() {
    let out = riskmdp(&["fixtures", "list"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "jaquette\ninvariant_model\ninventory_toy\n");
    let one = riskmdp(&["fixtures", "export", "jaquette"]);
    assert_eq!(String::from_utf8(one.stdout).unwrap(), riskmdp::fixtures::JAQUETTE_JSON);
    assert_eq!(riskmdp(&["fixtures", "export", "nope"]).status.code(), Some(1));
}

#[test]
fn thread_count_from_environment() {
    let args =
        ["simulate", "--model", "fixture:jaquette", "--policy", "first", "--functional", "cvar", "--alpha", "0.1"];
    let base = riskmdp(&args).stdout;
    let env = Command::new(env!("CARGO_BIN_EXE_riskmdp")).args(args).env("RISKMDP_THREADS", "3").output().unwrap();
    assert!(env.status.success());
    assert_eq!(env.stdout, base);
    assert_eq!(riskmdp(&[&args[..], &["--threads", "0"]].concat()).status.code(), Some(64));
}

#[test]
fn simulate_writes_samples_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let args = ["simulate", "--model", "fixture:jaquette", "--policy", "first", "--reps", "120"];
    let v = json(&riskmdp(&[&args[..], &["--samples", csv.to_str().unwrap()]].concat()));
    assert!(v["truncation_bound"].as_f64().unwrap() <= 1e-9);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("replication,R,C"));
    assert_eq!(text.lines().count(), 121);
    let mean: f64 =
        text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum::<f64>() / 120.0;
    assert!((mean - v["value"].as_f64().unwrap()).abs() < 1e-12);
}
