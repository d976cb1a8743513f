//! End-to-end runs of the `isac-sched` binary.

use std::path::Path;
use std::process::{Command, Output};

use isac_sched::cli::{read_policy, read_scenario, SampleCheckReport};
use isac_sched::sim::SWEEP_COLUMNS;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-sched")).current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn gen_default_is_k20_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &["gen", "--out", "a"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    run(dir.path(), &["gen", "--out", "b"]);
    let s = read_scenario(&dir.path().join("a/scenario.json")).unwrap();
    assert_eq!(s.num_devices(), 20);
    let fa = std::fs::read(dir.path().join("a/scenario.json")).unwrap();
    let fb = std::fs::read(dir.path().join("b/scenario.json")).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn unknown_field_is_a_config_error_with_path() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"schema_version": 1, "scenario": {"params": {"num_devicez": 3}}}"#);
    let o = run(dir.path(), &["gen", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("scenario.params") && err.contains("num_devicez"), "{err}");

    write(dir.path(), "v.json", r#"{"schema_version": 7}"#);
    let o = run(dir.path(), &["gen", "--config", "v.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));
}

#[test]
fn fair_policy_has_common_probability() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"schema_version": 1, "scenario": {"params": {"energy_fraction": 0.5}}}"#);
    let o = run(dir.path(), &["solve", "--config", "c.json", "--policy", "fair"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = read_policy(&dir.path().join("out/policy.json")).unwrap();
    let diag = p.report.policy.diag();
    assert!(diag.iter().all(|&v| (v - diag[0]).abs() < 1e-12), "{diag:?}");
}

#[test]
fn joint_mode_needs_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve", "--policy", "optimal", "--mode", "joint"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn joint_mode_with_correlation_solves() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "seed": 2,
            "scenario": {"params": {"num_devices": 3, "energy_fraction": 0.6, "rho_max": 0.5}}}"#,
    );
    let o = run(dir.path(), &["solve", "--config", "c.json", "--mode", "joint"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = read_policy(&dir.path().join("out/policy.json")).unwrap();
    assert!(p.report.feasible);
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert!(run(dir.path(), &["solve", "--seed", "5", "--out", out]).status.success());
    }
    let fa = std::fs::read(dir.path().join("a/policy.json")).unwrap();
    let fb = std::fs::read(dir.path().join("b/policy.json")).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn simulate_writes_per_device_table() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "cycles": 5000, "scenario": {"params": {"num_devices": 4, "energy_fraction": 0.5}}}"#,
    );
    let o = run(dir.path(), &["simulate", "--config", "c.json", "--sampler", "dg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/simulation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("device,rate,rate_se,r_min"));
}

#[test]
fn sweep_table_shape_and_rerun_equality() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "cycles": 1000,
            "scenario": {"params": {"num_devices": 4}},
            "sweep": {"kind": "energy", "grid": [0.0, 0.3, 0.7], "policies": ["optimal", "fair", "allon"]}}"#,
    );
    for out in ["a", "b"] {
        let o = run(dir.path(), &["sweep", "--config", "c.json", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/sweep.csv")).unwrap();
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert_eq!(lines[0], SWEEP_COLUMNS.join(","));
    // all-on exceeds every budget below 100%
    assert!(lines.iter().filter(|l| l.contains(",allon,")).all(|l| l.contains(",violated,")));
}

#[test]
fn sweep_without_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["sweep"]).status.code(), Some(2));
}

#[test]
fn sample_check_reports_both_samplers() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "sample_check": {"samples": 50000, "targets": [
            [[0.3, 0.15], [0.15, 0.5]],
            [[0.5, 0.5], [0.5, 0.5]]
        ]}}"#,
    );
    let o = run(dir.path(), &["sample-check", "--config", "c.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/sample_check.json")).unwrap();
    let r: SampleCheckReport = serde_json::from_str(&text).unwrap();
    // independent moments: both samplers reproduce them
    assert!(r.targets[0].checks.iter().all(|c| c.exact_fit && c.coverage_ok));
    assert!(r.targets[0].checks.iter().all(|c| c.max_abs_error.is_some()));
    // boundary moments: Ising does not converge, DG is used
    let ising = &r.targets[1].checks[0];
    let dg = &r.targets[1].checks[1];
    assert!(!ising.exact_fit && ising.note.is_some());
    assert!(dg.coverage_ok);
}

#[test]
fn init_config_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["init-config", "c.json"]).status.success());
    let o = run(dir.path(), &["gen", "--config", "c.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
