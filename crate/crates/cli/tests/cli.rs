//! End-to-end runs of the binary: output shape, files, exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sphere-lab"));
    cmd.args(args).env_remove("SPHERE_LAB_CACHE");
    if let Some(dir) = cache {
        cmd.env("SPHERE_LAB_CACHE", dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn energy_csv_for_small_shells() {
    let o = run(&["energy", "--dim", "4", "--lambda-range", "1:3"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,lambda,N,size,energy");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("4,1,2,8,"));
}

#[test]
fn gcd_sum_json_is_exact() {
    let o = run(&["gcd-sum", "--lambda", "1", "--format", "json"], None);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["lambda"], 1);
    assert_eq!(v[0]["gcd_sum"], 5);
}

#[test]
fn enumerate_writes_into_the_cache_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["enumerate", "--dim", "3", "--lambda", "9"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn out_dir_receives_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["paraboloid", "--n-min", "2", "--n-max", "4", "--out", out], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(dir.path().join("paraboloid.csv")).unwrap();
    assert_eq!(body.lines().count(), 4);
}

#[test]
fn passing_suite_exits_zero() {
    let o = run(&["suite", "--name", "energy-identity", "--lambda-range", "0:6"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn failed_assertion_exits_one() {
    let o = run(&["suite", "--name", "13", "--lambda-range", "100:140", "--tol", "slope_max=1.0"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["energy", "--dim", "4", "--lambda-range", "9:3"][..],
        &["energy", "--dim", "4", "--lambda-range", "1:9:prime"],
        &["energy", "--lambda", "5"],
        &["suite", "--name", "no-such-suite"],
        &["density", "--gram", "1,0;0,x", "--prime", "3"],
        &["frobnicate"],
    ] {
        let o = run(args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn exhausted_budget_is_an_input_error() {
    let o = run(&["energy", "--dim", "4", "--lambda", "101", "--budget-pairs", "10"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}
