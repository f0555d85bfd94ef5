use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn spec(name: &str) -> String {
    format!("{}/specs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocycle-spectra"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn simple_spec_exits_zero() {
    let out = run(&["simplicity", &spec("simple_2x2.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema"], "cocycle-spectra/report/v1");
    assert_eq!(v["outcome"], "success");
    assert_eq!(v["result"]["simple"], true);
}

#[test]
fn non_simple_specs_exit_one() {
    for name in ["identity.json", "tie.json"] {
        let out = run(&["simplicity", &spec(name)]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        assert_eq!(json(&out)["result"]["simple"], false, "{name}");
    }
}

#[test]
fn bad_input_exits_two_with_error_envelope() {
    let out = run(&["simplicity", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["outcome"], "error");
    assert!(v["error"].as_str().is_some_and(|s| !s.is_empty()));
    assert!(!out.stderr.is_empty());

    let out = run(&["vandermonde", "--m", "3,1", "--x", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn conflicting_arithmetic_flags_are_rejected() {
    let out = run(&["simplicity", &spec("simple_2x2.json"), "--exact", "--float"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn vandermonde_exact_values() {
    let v = json(&run(&["vandermonde", "--m", "0,1,3", "--x", "1,2,3"]));
    assert_eq!(v["result"]["det"], "12");
    assert_eq!(v["result"]["product_part"], "2");
    assert_eq!(v["result"]["schur_part"], "6");
}

#[test]
fn zorich_d2_matches_levy_constant() {
    let out = run(&["zorich", "--d", "2", "--iters", "100000", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let ex = &v["result"]["spectrum"]["exponents"];
    let se = v["result"]["spectrum"]["se"][0].as_f64().unwrap();
    let levy = std::f64::consts::PI.powi(2) / (12.0 * 2f64.ln());
    assert!((ex[0].as_f64().unwrap() - levy).abs() < 4.0 * se);
    assert_eq!(v["result"]["symmetric"], true);
}

#[test]
fn dirac_reports_convergence_and_rotation_control() {
    let v = json(&run(&["dirac", "--spec", &spec("simple_3x3.json")]));
    assert_eq!(v["exit_code"], 0);
    assert_eq!(v["result"]["converged"], true);
    let v = json(&run(&["dirac", "--spec", &spec("rotation.json")]));
    assert_eq!(v["result"]["converged"], false);
}

#[test]
fn induce_and_holonomy_examples() {
    let out = run(&["induce", &spec("bernoulli_diag.json"), "--iters", "50000"]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["holonomy", &spec("perturbed.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["command"], "holonomy");
}

#[test]
fn csv_output_has_schema_line() {
    let out = run(&["zorich", "--d", "3", "--iters", "20000", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# cocycle-spectra/csv/v1 zorich"));
    assert!(lines.next().is_some_and(|h| h.contains(',')));
}

#[test]
fn out_flag_writes_file() {
    let path: PathBuf = std::env::temp_dir().join(format!("cocycle-spectra-cli-{}.json", std::process::id()));
    let p = path.to_str().unwrap();
    let out = run(&["vandermonde", "--m", "0,2", "--x", "1/2,3", "--out", p]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(v["command"], "vandermonde");
}
