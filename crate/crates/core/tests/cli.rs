//! End-to-end checks of the command-line front end.

use std::path::PathBuf;
use std::process::Command;

fn fixture(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("olcpm-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn w_file() -> PathBuf {
    fixture(
        "w.json",
        r#"{"kind":"olcpm","matroid":{"type":"uniform","n":2,"rank":1},"elements":[{"cost":"1","outcomes":[{"value":"10","prob":"1/2"},{"value":"0","prob":"1/2"}]},{"cost":"0","outcomes":[{"value":"4","prob":"1/2"},{"value":"0","prob":"1/2"}]}]}"#,
    )
}

fn series_file() -> PathBuf {
    fixture(
        "series.json",
        r#"{"kind":"upm","matroid":{"type":"graphic","vertices":3,"edges":[[0,1],[1,2],[0,2]]},"special":2,"probs":{"0":"1/2","1":"1/2"}}"#,
    )
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_olcpm"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn solve_reports_the_optimal_contract() {
    let w = w_file();
    let (code, stdout, _) = run(&["solve", w.to_str().unwrap(), "--method", "exact"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["alpha"], "1/3");
    assert_eq!(doc["utility"], "4");
    assert_eq!(doc["method"], "exact");
}

#[test]
fn critical_values_list_the_candidates() {
    let w = w_file();
    let (code, stdout, _) = run(&["critical-values", w.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(stdout.trim(), r#"["0","1/5","1/3","1"]"#);
}

#[test]
fn upm_solve_is_exact() {
    let series = series_file();
    let (code, stdout, _) = run(&["upm", "solve", series.to_str().unwrap(), "--method", "exact"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.trim(), r#"{"rho":"3/4"}"#);
}

#[test]
fn upm_via_olcpm_matches_exact() {
    let series = series_file();
    let (code, stdout, _) = run(&["upm", "via-olcpm", series.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(stdout.trim(), r#"{"rho":"3/4"}"#);
}

#[test]
fn evaluate_reports_exact_rationals() {
    let w = w_file();
    let (code, stdout, _) = run(&["evaluate", w.to_str().unwrap(), "--alpha", "1/2"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["u_principal"], "3");
    assert_eq!(doc["u_agent"], "2");
    assert_eq!(doc["expected_cost"], "1");
}

#[test]
fn trace_follows_a_pinned_realization() {
    let w = w_file();
    let (code, stdout, _) = run(&[
        "trace",
        w.to_str().unwrap(),
        "--alpha",
        "1/2",
        "--realization",
        "0,0",
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["probe_order"], serde_json::json!([1, 0]));
    assert_eq!(doc["returned"], serde_json::json!([0]));
    assert_eq!(doc["principal_reward"], "10");
}

#[test]
fn validation_errors_exit_one() {
    let bad = fixture(
        "bad.json",
        r#"{"kind":"olcpm","matroid":{"type":"uniform","n":1,"rank":1},"elements":[{"cost":"1","outcomes":[{"value":"3","prob":"1/3"}]}]}"#,
    );
    let (code, _, stderr) = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("element 0"), "{stderr}");
}

#[test]
fn infeasible_parameters_exit_two() {
    let series = series_file();
    let (code, _, _) = run(&[
        "upm",
        "to-olcpm",
        series.to_str().unwrap(),
        "--beta",
        "1/2",
        "--epsilon",
        "1/4",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn unknown_flags_exit_one_with_usage() {
    let w = w_file();
    let (code, _, stderr) = run(&["solve", w.to_str().unwrap(), "--frobnicate"]);
    assert_eq!(code, 1);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn sweep_csv_has_the_expected_rows() {
    let w = w_file();
    let (code, stdout, _) = run(&[
        "sweep",
        w.to_str().unwrap(),
        "--grid",
        "2",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = stdout.trim().lines().collect();
    assert_eq!(lines[0], "alpha,u_principal,u_agent,expected_cost");
    assert!(lines.contains(&"1/3,4,1,1"), "{stdout}");
    assert!(lines.contains(&"1/2,3,2,1"), "{stdout}");
}
