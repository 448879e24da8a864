use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn crossover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossover"))
        .args(args)
        .env("CROSSOVER_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const D2_MECH: &str = r#"{"p":4,"n":16,"a":[0,0,0.5,0.5]}"#;

#[test]
fn solve_reports_the_certificate() {
    let dir = TempDir::new().unwrap();
    let mech = write(&dir, "m.json", D2_MECH);
    let cert = stdout_json(&crossover(&["solve", "--mech", &mech, "--t", "4"]));
    assert_eq!(cert["regime"], "closed_form_ii");
    assert!((cert["x_star"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!((cert["y_star"].as_f64().unwrap() - 2.1745528).abs() < 1e-6);

    let cf = stdout_json(&crossover(&[
        "solve",
        "--mech",
        &mech,
        "--t",
        "4",
        "--closed-form-only",
    ]));
    assert_eq!(cf["x_star"].as_f64().unwrap(), 1.0 / 3.0);

    let complete = write(&dir, "c.json", r#"{"p":4,"n":16,"a":[0,0,0,1]}"#);
    let cert = stdout_json(&crossover(&["solve", "--mech", &complete, "--t", "4"]));
    assert!(!cert["support"].as_array().unwrap().is_empty());
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"p":4,"n":16,"a":[0,0,0.5,0.6]}"#);
    let out = crossover(&["solve", "--mech", &bad, "--t", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sum"));

    let garbled = write(&dir, "g.json", "{");
    assert_eq!(
        crossover(&["solve", "--mech", &garbled, "--t", "4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        crossover(&["evaluate", "--fixture", "d7"]).status.code(),
        Some(2)
    );
}

#[test]
fn evaluate_fixture_exact_and_budget_failure() {
    let out = stdout_json(&crossover(&[
        "evaluate",
        "--fixture",
        "d9",
        "--criterion",
        "t",
    ]));
    let r = &out["reports"][0];
    assert_eq!(r["criterion"], "T");
    assert_eq!(r["method"], "exact");
    assert!((r["phi0"].as_f64().unwrap() - 2.7368).abs() < 5e-3);
    assert!((r["gap"].as_f64().unwrap() - 0.997823).abs() < 1e-3);

    let all = stdout_json(&crossover(&["evaluate", "--fixture", "d2"]));
    assert_eq!(all["reports"].as_array().unwrap().len(), 4);

    let over = crossover(&["evaluate", "--fixture", "d8"]);
    assert_eq!(over.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&over.stderr).contains("budget"));
}

#[test]
fn monte_carlo_is_seed_reproducible() {
    let args = [
        "evaluate",
        "--fixture",
        "d8",
        "--method",
        "mc",
        "--reps",
        "500",
        "--seed",
        "5",
    ];
    let a = crossover(&args);
    let b = crossover(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout_json(&a)["reports"][0]["replications"], 500);
}

#[test]
fn compare_same_design_gives_unit_ratios() {
    let rows = stdout_json(&crossover(&[
        "compare",
        "--fixture",
        "d9",
        "--baseline-fixture",
        "d9",
        "--criterion",
        "t",
    ]));
    assert_eq!(rows[0]["phi0_ratio"], 1.0);
    assert_eq!(rows[0]["v_ratio"], 1.0);
}

#[test]
fn compare_with_zero_baseline_is_undefined() {
    let dir = TempDir::new().unwrap();
    let d = write(
        &dir,
        "d.json",
        r#"{"p":3,"t":2,"n":2,"sequences":["121","212"]}"#,
    );
    let zero = write(
        &dir,
        "z.json",
        r#"{"p":3,"t":2,"n":2,"sequences":["111","222"]}"#,
    );
    let mech = write(&dir, "m.json", r#"{"p":3,"n":2,"a":[0,0,1]}"#);
    let out = crossover(&[
        "compare",
        "--design",
        &d,
        "--baseline",
        &zero,
        "--mech",
        &mech,
        "--criterion",
        "a",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows[0]["phi0_ratio"], "undefined");
}

#[test]
fn design_is_byte_identical_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let mech = write(&dir, "m.json", D2_MECH);
    let out_path = dir.path().join("d.json");
    let args = [
        "design",
        "--mech",
        &mech,
        "--t",
        "4",
        "--n",
        "16",
        "--restarts",
        "0",
        "--seed",
        "7",
        "--iters",
        "50",
        "--out",
        out_path.to_str().unwrap(),
    ];
    let a = crossover(&args);
    let b = crossover(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["design"]["n"], 16);
    assert!(v["search"]["residual"].as_f64().unwrap() >= 0.0);
    assert!(Path::new(&out_path).exists());

    let eval = crossover(&[
        "evaluate",
        "--design",
        out_path.to_str().unwrap(),
        "--mech",
        &mech,
    ]);
    assert!(eval.status.success());

    let single = stdout_json(&crossover(&[
        "design", "--mech", &mech, "--t", "4", "--n", "1", "--iters", "10",
    ]));
    assert_eq!(single["design"]["sequences"].as_array().unwrap().len(), 1);
    assert!(single["search"]["residual"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_prints_csv() {
    let out = crossover(&[
        "sweep",
        "--fixture",
        "d2",
        "--theta-grid",
        "0.01,0.5,0.99",
        "--criterion",
        "t",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "theta,criterion,phi0,stderr,v_phi,phi1,gap,e1_tilde,ell"
    );
    assert_eq!(lines.len(), 4);
    let gap = |line: &str| line.split(',').nth(6).unwrap().parse::<f64>().unwrap();
    assert!(gap(lines[1]) > 0.999 && gap(lines[3]) > 0.999);
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_crossover"))
        .args(["evaluate", "--fixture", "d9"])
        .env("CROSSOVER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
