// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs of the `bistbench` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::{fixture_path, fixture_text};

fn bistbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bistbench"))
        .args(args)
        .env_remove("BISTBENCH_WORKERS")
        .output()
        .expect("binary runs")
}

fn fx(name: &str) -> String {
    fixture_path(name).to_string_lossy().into_owned()
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn lint_exit_codes() {
    let ok = bistbench(&["lint", &fx("ten_gate.bench")]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("5 inputs, 3 outputs, 10 gates"));

    let dir = tempfile::tempdir().unwrap();
    let undriven = write(dir.path(), "u.bench", "INPUT(a)\nOUTPUT(y)\ny = AND(a, b)\n");
    let o = bistbench(&["lint", &undriven]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains('b'));

    let empty = write(dir.path(), "e.bench", "");
    assert_eq!(bistbench(&["lint", &empty]).status.code(), Some(1));
    assert_eq!(bistbench(&["lint", "/nonexistent.bench"]).status.code(), Some(1));
}

#[test]
fn import_and2_vectors() {
    let v = json_out(&bistbench(&["import", &fx("and2.bench"), &fx("and2.patterns")]));
    assert_eq!(v["external_patterns"], 4);
    let row = &v["comparison"][0];
    // Exhaustive vectors detect all six stuck-at faults; the 4-vector
    // sequence 00 01 10 11 launches only the rise of b and the falls around
    // it, so transition coverage stays partial.
    assert_eq!(row["saf_faults"], 6);
    assert_eq!(row["saf_external"], 100.0);

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.patterns", "# b a\n00\n011\n");
    let o = bistbench(&["import", &fx("and2.bench"), &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tap_empty_trace_and_expect_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.trace", "# TCK TMS TDI\n");
    let o = bistbench(&["tap", &fx("ten_gate.bench"), &empty]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "# TCK TMS TDI TDO\n");

    let ok = bistbench(&[
        "tap",
        &fx("ldpc_like_core.bench"),
        "--plan",
        &fx("ldpc_like_core.plan.json"),
        &fx("session.trace"),
        "--expect",
        &fx("session.tdo"),
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(String::from_utf8_lossy(&ok.stdout), fixture_text("session.tdo"));

    // Flip the first recorded TDO bit.
    let tdo = fixture_text("session.tdo");
    let mut lines: Vec<String> = tdo.lines().map(str::to_string).collect();
    let k = lines.iter().position(|l| l.ends_with(" 0") || l.ends_with(" 1")).unwrap();
    let flipped = if lines[k].ends_with('0') { '1' } else { '0' };
    lines[k].pop();
    lines[k].push(flipped);
    let bad = write(dir.path(), "bad.tdo", &(lines.join("\n") + "\n"));
    let o = bistbench(&[
        "tap",
        &fx("ldpc_like_core.bench"),
        "--plan",
        &fx("ldpc_like_core.plan.json"),
        &fx("session.trace"),
        "--expect",
        &bad,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mismatch at sample"));
}

#[test]
fn diagnose_and2_has_class_of_three() {
    let v = json_out(&bistbench(&["diagnose", &fx("and2.bench"), "--pattern-file", &fx("and2.patterns"), "--faults", "saf"]));
    let classes = v["multi_member_classes"].as_array().unwrap();
    assert_eq!(classes.len(), 1);
    let mut members: Vec<&str> = classes[0].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    members.sort_unstable();
    assert_eq!(members, ["a/SA0", "b/SA0", "y/SA0"]);
    let total = v["classes_table"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(total["max_size"], 3);
    assert_eq!(total["classes"], 4);

    let sig = json_out(&bistbench(&["diagnose", &fx("and2.bench"), "--granularity", "signature", "--patterns", "64"]));
    assert_eq!(sig["granularity"], "signature");
    let bad = bistbench(&["diagnose", &fx("and2.bench"), "--granularity", "signature", "--pattern-file", &fx("and2.patterns")]);
    assert_eq!(bad.status.code(), Some(1));
}

fn total_saf(v: &Value) -> f64 {
    let rows = v["coverage"].as_array().unwrap();
    rows.last().unwrap()["saf_coverage"].as_f64().unwrap()
}

#[test]
fn fewer_patterns_never_cover_more() {
    let one = json_out(&bistbench(&["faultsim", &fx("seventeen_gate.bench"), "--patterns", "1", "--faults", "saf"]));
    let full = json_out(&bistbench(&["faultsim", &fx("seventeen_gate.bench"), "--faults", "saf"]));
    assert_eq!(one["pattern_count"], 1);
    assert!(total_saf(&one) <= total_saf(&full));
    assert!(total_saf(&one) > 0.0);
}

#[test]
fn reports_are_deterministic() {
    let args = ["bist", &fx("seventeen_gate.bench"), "--patterns", "200", "--seed", "0x1234"];
    let a = bistbench(&args);
    let b = bistbench(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = json_out(&a);
    assert_eq!(v["seed"], "0x01234");
    assert_eq!(v["selftest"]["patterns_applied"], 200);
}

#[test]
fn bist_with_wrong_golden_fails() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = bistbench(&["bist", &fx("ten_gate.bench"), "--patterns", "64", "--out", first.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut plan: Value = serde_json::from_str(&std::fs::read_to_string(first.join("plan.json")).unwrap()).unwrap();
    let good = plan["golden"][0]["value"].as_str().unwrap().to_string();
    plan["golden"][0]["value"] = (if good == "0x0" { "0x1" } else { "0x0" }).into();
    let p = write(dir.path(), "plan.json", &plan.to_string());

    let out = dir.path().join("out");
    let o = bistbench(&["bist", &fx("ten_gate.bench"), "--plan", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("FAIL"), "{text}");
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(out.join("bist_report.json")).unwrap()).unwrap();
    assert_eq!(rep["golden_supplied"], true);
    assert_eq!(rep["selftest"]["pass"][0], false);

    // The untouched plan passes and the report renders.
    let ok = bistbench(&["bist", &fx("ten_gate.bench"), "--plan", first.join("plan.json").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    let r = bistbench(&["report", out.join("bist_report.json").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("T10"));
}

#[test]
fn workers_env_and_flag() {
    let plain = bistbench(&["faultsim", &fx("seventeen_gate.bench"), "--workers", "3"]);
    let env = Command::new(env!("CARGO_BIN_EXE_bistbench"))
        .args(["faultsim", &fx("seventeen_gate.bench")])
        .env("BISTBENCH_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(json_out(&plain), json_out(&env));
    assert_ne!(bistbench(&["faultsim", &fx("seventeen_gate.bench"), "--faults", "nope"]).status.code(), Some(0));
}
