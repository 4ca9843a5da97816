use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hpcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpcheck")).args(args).env("HPCHECK_THREADS", "1").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn parse_bundled_and_file_models() {
    let out = hpcheck(&["parse", "m2"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("CONSTANTS"));

    let path = models_dir().join("m4.hpmodel");
    let out = hpcheck(&["parse", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["command"], "parse");
}

#[test]
fn malformed_model_is_a_usage_error() {
    let path = tmp("bad.hpmodel");
    std::fs::write(&path, "CONSTANTS\n  T = \n").unwrap();
    let out = hpcheck(&["parse", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.hpmodel:3:1"), "{err}");
}

#[test]
fn missing_file_and_bad_flags() {
    assert_eq!(code(&hpcheck(&["parse", "/nonexistent/model.hpmodel"])), 2);
    assert_eq!(code(&hpcheck(&["check", "m2", "--invariant", "zeta1", "--budget", "0"])), 2);
    assert_eq!(code(&hpcheck(&["check", "m2", "--invariant", "nope"])), 2);
    assert_eq!(code(&hpcheck(&["check", "m2", "--invariant", "zeta1", "--box", "x=3:1"])), 2);
    assert_eq!(code(&hpcheck(&["frobnicate"])), 2);
}

#[test]
fn script_replay_reports_the_abort() {
    let script = models_dir().join("fig2.script");
    let trace = tmp("walkthrough.csv");
    let out = hpcheck(&["simulate", "m2", "--script", script.to_str().unwrap(), "--trace", trace.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let sim = &json(&out)["simulation"];
    assert_eq!(sim["exact"], true);
    let outcome = &sim["outcome"];
    assert_eq!(outcome["aborted"], true);
    assert_eq!(outcome["state"]["x"], "0.9");
    assert_eq!(outcome["state"]["v"], "1.8");
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("step,construct,t,"), "{csv}");
}

#[test]
fn random_simulation_is_seeded() {
    let run = || hpcheck(&["simulate", "m2", "--random", "20", "--seed", "3", "--format", "json"]).stdout;
    assert_eq!(run(), run());
}

#[test]
fn finding_exits_one_with_certificate() {
    let out = hpcheck(&["check", "m2", "--invariant", "zeta1", "--obligation", "rho", "--budget", "2000", "--format", "json"]);
    assert_eq!(code(&out), 1);
    let verdicts = json(&out)["verdicts"].clone();
    let v = &verdicts[0];
    assert_eq!(v["verdict"], "Falsified");
    assert_eq!(v["certificate"]["exact"], true);
}

#[test]
fn no_finding_exits_zero() {
    let out = hpcheck(&["check", "m4", "--invariant", "zeta2", "--obligation", "rho", "--budget", "2000", "--format", "json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["verdicts"][0]["verdict"], "NotFalsified");
}

#[test]
fn json_out_matches_stdout() {
    let path = tmp("rho.json");
    let args = ["check", "m2", "--invariant", "zeta1", "--obligation", "rho", "--budget", "500", "--format", "json", "--json-out", path.to_str().unwrap()];
    let out = hpcheck(&args);
    assert_eq!(std::fs::read(&path).unwrap(), out.stdout);
}

#[test]
fn starved_table2_reports_mismatches() {
    let out = hpcheck(&["table2", "--budget", "10"]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("rows match") && !text.contains("8/8 rows match"), "{text}");
    assert!(text.contains("caveat:"));
}
