//! Runs the `hslab` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hslab")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn constants_four_dimensions() {
    let v = json_of(&hslab(&["constants", "--n", "4", "--s", "0"]));
    assert_eq!(v["c"].as_f64().unwrap(), 1.0 / 6.0);
    assert_eq!(v["crit"].as_f64().unwrap(), 4.0);
    assert!(v["C1"].is_null());
    assert!(v["paper_anchor"].as_array().unwrap().len() >= 2);
    let text = String::from_utf8(hslab(&["constants", "--n", "5", "--s", "1"]).stdout).unwrap();
    assert!(text.contains("\"c\": 1.7857142857142858e-1"), "{text}");
}

#[test]
fn identities_default_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("id.csv");
    let v = json_of(&hslab(&["identities", "--grid", "default", "--csv", csv.to_str().unwrap()]));
    assert_eq!(v["all_within_tolerance"], Value::Bool(true));
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["n", "s", "field", "closed_form", "quadrature", "rel_err"]);
    assert_eq!(rows.len() as u64, v["rows"].as_u64().unwrap());
    for row in &rows {
        assert!(row[5].parse::<f64>().unwrap() < 1e-8, "{row:?}");
    }
    assert!(rows.iter().any(|r| r[0] == "3" && r[2] == "n3_normalization"));
}

#[test]
fn conformal_mass_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let svg = dir.path().join("g.svg");
    let v = json_of(&hslab(&[
        "mass",
        "--radius",
        "1",
        "--a-const",
        "0.75",
        "--csv",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]));
    assert!(v["mass"].as_f64().unwrap().abs() <= 1e-3);
    assert!(v["coercivity_margin"].as_f64().unwrap() > 0.0);
    assert!(v["residual"].as_f64().unwrap() <= 1e-7);
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["r", "G", "beta"]);
    assert_eq!(rows.len(), 1024);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn tabulated_potential_file() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("a.csv");
    std::fs::write(&table, "r,a\n0,0.5\n1.5,0.5\n3.2,0.5\n").unwrap();
    let from_file = json_of(&hslab(&["mass", "--a-file", table.to_str().unwrap()]));
    let constant = json_of(&hslab(&["mass", "--a-const", "0.5"]));
    assert_eq!(from_file["mass"], constant["mass"]);
    std::fs::write(&table, "r,a\n0,0.5\n1.5,x\n").unwrap();
    assert_eq!(hslab(&["mass", "--a-file", table.to_str().unwrap()]).status.code(), Some(64));
}

#[test]
fn expand_writes_samples_fit_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("e.csv");
    let svg = dir.path().join("e.svg");
    let json = dir.path().join("e.json");
    let out = hslab(&[
        "expand",
        "--n",
        "5",
        "--s",
        "1",
        "--a-const",
        "0.1",
        "--csv",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["fit"]["model"], "eps2");
    assert!(v["fit"]["rel_err"].as_f64().unwrap() <= 0.02);
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["eps", "J", "K*J-1"]);
    assert_eq!(rows.len(), v["eps"].as_array().unwrap().len());
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<circle"));

    // a custom ε window
    let v = json_of(&hslab(&[
        "expand", "--n", "5", "--s", "1", "--a-const", "0.1", "--eps-min", "1e-4", "--eps-max", "1e-2",
    ]));
    assert_eq!(v["eps"].as_array().unwrap().len(), 25);
}

#[test]
fn expand_in_dimension_three_reports_both_mass_coefficients() {
    let v = json_of(&hslab(&["expand", "--n", "3", "--s", "1", "--a-const", "0.5"]));
    assert_eq!(v["fit"]["model"], "eps1");
    assert!(v["mass"].as_f64().unwrap() > 0.0);
    assert!(v["corrected_rel_err"].as_f64().unwrap() <= 0.05);
    let t = &v["mass_targets"];
    assert!(t["stated"].as_f64().unwrap() > t["corrected"].as_f64().unwrap());
}

#[test]
fn minimize_reports_ladder_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    let v = json_of(&hslab(&[
        "minimize",
        "--n",
        "3",
        "--s",
        "1",
        "--a-const",
        "0.5",
        "--grid-N",
        "256",
        "--csv",
        csv.to_str().unwrap(),
    ]));
    for key in ["lambda_sequence", "verdict", "margins", "residuals"] {
        assert!(!v[key].is_null(), "{key}");
    }
    assert_eq!(v["verdict"]["verdict"], "BELOW_THRESHOLD");
    assert!(v["residuals"].as_array().unwrap().iter().all(|r| r.as_f64().unwrap() <= 1e-8));
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["r", "u"]);
    assert_eq!(rows.len(), 256);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_json = dir.path().join("out.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"subcommand": "constants", "manifold": {{"kind": "sphere", "n": 4, "radius": 1.0}}, "s": 0.0,
                "output": {{"json": "{}"}}}}"#,
            out_json.display()
        ),
    )
    .unwrap();
    let out = hslab(&["constants", "--n", "7", "--s", "1", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&out_json).unwrap()).unwrap();
    assert_eq!(v["n"], 4);
    assert_eq!(v["c"].as_f64().unwrap(), 1.0 / 6.0);
    // the subcommand may come from the file alone
    assert!(hslab(&["--config", cfg.to_str().unwrap()]).status.success());

    std::fs::write(&cfg, r#"{"subcommand": "constants", "manifold": {"n": 4}, "dimension": 3}"#).unwrap();
    let bad = hslab(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("dimension"));
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(hslab(&[]).status.code(), Some(64));
    assert_eq!(hslab(&["constants", "--n", "4"]).status.code(), Some(64));
    assert_eq!(hslab(&["constants", "--n", "4", "--s", "2.5"]).status.code(), Some(64));
    assert_eq!(hslab(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(hslab(&["--help"]).status.code(), Some(0));
    // domain: Δ + a is not coercive
    let out = hslab(&["mass", "--a-const=-2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coercive"));
    // convergence: the first rung cannot finish in one step
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("m.json");
    let out = hslab(&[
        "minimize", "--n", "5", "--s", "1", "--a-const", "0.1", "--max-iters", "1", "--json", json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["failure"], 0);
    assert!(v["verdict"].is_null());
}

#[test]
fn thread_cap_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_hslab"))
            .args(["identities", "--grid", "coarse", "--random-points", "3", "--seed", "5"])
            .env("HSLAB_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(run("0").status.code(), Some(64));
    assert_eq!(run("many").status.code(), Some(64));
}

#[test]
fn every_float_has_seventeen_digits() {
    let text = String::from_utf8(hslab(&["bubble", "--n", "6", "--s", "0.5"]).stdout).unwrap();
    let mut floats = 0;
    for token in text.split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']') {
        if token.contains('e') && token.parse::<f64>().is_ok() {
            let mantissa = token.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.len(), 18, "{token}");
            floats += 1;
        }
    }
    assert!(floats > 10);
}

#[test]
fn outputs_are_replaced_whole() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    std::fs::write(&csv, "stale content that is longer than the new file ".repeat(100)).unwrap();
    assert!(hslab(&["constants", "--n", "5", "--s", "1", "--csv", csv.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("name,value\n") && !text.contains("stale"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
