use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gasnet_core::scenario::Scenario;
use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn gasnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasnet")).args(args).output().unwrap()
}

fn run_on(cmd: &str, path: &Path, out: &Path) -> Output {
    gasnet(&[cmd, "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn stderr_record(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim_end()).unwrap()
}

#[test]
fn minimal_scenario_fills_defaults() {
    let sc = Scenario::parse(&fs::read_to_string(scenario("minimal")).unwrap()).unwrap();
    assert_eq!(sc.gravity, 9.81);
    assert_eq!(sc.pipes[0].friction, 0.0);
    assert!(sc.junctions.is_empty() && sc.control.is_none() && sc.stabilization.is_none());
}

#[test]
fn zero_horizon_writes_only_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut json: Value = serde_json::from_str(&fs::read_to_string(scenario("minimal")).unwrap()).unwrap();
    json["numerics"]["horizon"] = 0.0.into();
    let path = dir.path().join("t0.json");
    fs::write(&path, json.to_string()).unwrap();
    let out = run_on("simulate", &path, &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,pipe_id,cell_index,x,rho,q,p"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.starts_with("0.0,pipe,") && r.contains(",1.0,0.1,")));
}

#[test]
fn simulate_conserves_mass_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_on("simulate", &scenario("star"), dir.path());
    assert!(out.status.success());
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let (m0, m1) = (summary["total_mass_initial"].as_f64().unwrap(), summary["total_mass_final"].as_f64().unwrap());
    assert!((m0 - m1).abs() <= 1e-12 * m0);
    assert_eq!(summary["final_time"].as_f64(), Some(0.6));
    let junctions = fs::read_to_string(dir.path().join("junctions.csv")).unwrap();
    // 4 samples, 3 edges each
    assert_eq!(junctions.lines().count(), 1 + 4 * 3);
}

#[test]
fn steady_profile_has_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_on("steady", &scenario("steady"), dir.path()).status.success());
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let prof = &summary["profiles"][0];
    assert!(prof["residual"].as_f64().unwrap() < 1e-10);
    assert!(prof["rho_end"].as_f64().unwrap() < prof["rho_start"].as_f64().unwrap());
    let csv = fs::read_to_string(dir.path().join("steady.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn inadmissible_kappa_withholds_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_on("stabilize", &scenario("stabilize_inadmissible"), dir.path());
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["bound_holds"].is_null());
    assert_eq!(report["kappa_admissible"], serde_json::json!([false, true]));
}

#[test]
fn stabilize_certifies_the_admissible_block() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_on("stabilize", &scenario("stabilize"), dir.path()).status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["bound_holds"], Value::Bool(true));
    let lyap = fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(lyap.lines().next(), Some("m,t,L,bound"));
    assert_eq!(lyap.lines().count(), 1 + 101);
    let dist = fs::read_to_string(dir.path().join("distance.csv")).unwrap();
    let d: Vec<f64> = dist.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(d.last().unwrap() < d.first().unwrap());
}

#[test]
fn optimize_writes_schedule_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_on("optimize", &scenario("compressor"), dir.path()).status.success());
    let costs = fs::read_to_string(dir.path().join("costs.csv")).unwrap();
    assert_eq!(costs.lines().next(), Some("candidate,u,tv,tracking,total,feasible"));
    assert_eq!(costs.lines().count(), 18);
    let schedule = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert_eq!(schedule.lines().count(), 1 + 20);
    for row in schedule.lines().skip(1) {
        let u: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=0.4).contains(&u));
    }
}

#[test]
fn invalid_scenario_reports_a_located_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut json: Value = serde_json::from_str(&fs::read_to_string(scenario("minimal")).unwrap()).unwrap();
    json["numerics"]["cfl_number"] = 1.5.into();
    let path = dir.path().join("bad.json");
    fs::write(&path, json.to_string()).unwrap();
    let out = run_on("simulate", &path, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let rec = stderr_record(&out);
    assert_eq!(rec["error"], "scenario");
    assert!(rec["message"].as_str().unwrap().contains("numerics.cfl_number"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"pipes\": [\n    {\"id\": 1}\n  ]\n}\n").unwrap();
    let out = run_on("simulate", &path, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let rec = stderr_record(&out);
    assert_eq!(rec["error"], "scenario");
    assert!(rec["message"].as_str().unwrap().contains("line 3"), "{rec}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_on("simulate", &dir.path().join("absent.json"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "io");
}

#[test]
fn missing_block_and_bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_on("optimize", &scenario("minimal"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"], "usage");
    let out = gasnet(&["simulate", "--scenario"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_record(&out)["error"], "usage");
}
