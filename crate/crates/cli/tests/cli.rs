use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_schrolab"));
    c.env_remove("SCHROLAB_WORKERS").env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path, command: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{command}.json"))).unwrap()).unwrap()
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn malformed_potential_exits_one_and_names_field() {
    let o = run(&["rho", "--potential", "const:abc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`potential`"), "{}", stderr(&o));
}

#[test]
fn malformed_grid_and_kernel_name_their_fields() {
    let o = run(&["rho", "--grid", "dim:3;lo:0;hi:1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
    let o = run(&["kernel", "--kernel", "riesz:1,0", "--x", "0,0,0", "--y", "1,0,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`kernel`"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["rho", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--suite", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["maximal", "--op", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["--workers", "0", "kernel", "--kernel", "mehler:1", "--x", "0", "--y", "0"]).status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["verify", "--help"]).status.code(), Some(0));
    let o = run(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("schrolab "));
}

#[test]
fn reports_are_deterministic_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["weight-class", "--weight", "agmon:0.5", "--balls", "16", "--levels", "4", "--seed", "7"];
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(k.to_string());
        let o = bin().args(args).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut r = report(&out, "weight-class");
        assert!(r["timestamp"].is_string());
        r.as_object_mut().unwrap().remove("timestamp");
        reports.push(r);
    }
    assert_eq!(reports[0], reports[1]);
    let a = std::fs::read(dir.path().join("0/weight-class-trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("1/weight-class-trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for (k, w) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(k.to_string());
        let o = bin().env("SCHROLAB_WORKERS", w).args(["rho", "--pairs", "300", "--out"]).arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        hashes.push(report(&out, "rho")["hash"].clone());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn envelope_embeds_config_version_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["kernel", "--kernel", "heat:2,0.5", "--x", "0,0", "--y", "1,0", "--sweep", "0.1,2,4", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "kernel");
    assert_eq!(r["tool"], "schrolab");
    assert_eq!(r["command"], "kernel");
    assert_eq!(r["config"]["kernel"], "heat:2,0.5");
    assert!(r["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert_eq!(r["hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("kernel-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().next(), Some("r,value"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/verify-quick.json");
    let o = bin().args(["verify", "--suite", "mehler,s-function", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "verify");
    assert_eq!(r["config"]["quick"], true);
    assert_eq!(r["config"]["suite"], "mehler,s-function");
    assert_eq!(r["result"]["passed"], true);
    assert_eq!(r["result"]["suites"].as_array().unwrap().len(), 2);
    let suite = &r["result"]["suites"][0];
    for key in ["name", "anchor", "samples", "constants", "checks", "passed"] {
        assert!(!suite[key].is_null(), "missing {key}");
    }
}

#[test]
fn required_subcommand_forms_run() {
    let cases: [&[&str]; 6] = [
        &["maximal", "--op", "adapted", "--probe-step", "6"],
        &["maximal", "--op", "phi", "--probe-step", "6"],
        &["heat", "--family", "mehler"],
        &["heat", "--family", "const", "--N", "2"],
        &["riesz", "--N", "1", "--j", "1", "--grid", "dim:3;lo:-2,-2,-2;hi:2,2,2;h:0.25,0.25,0.25", "--balls", "2"],
        &["norm-bound", "--op", "riesz:1,2", "--weight", "pow:0.5", "--p", "2", "--grid", "dim:3;lo:-2,-2,-2;hi:2,2,2;h:0.25,0.25,0.25", "--balls", "2"],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn phi_maximal_of_constant_decays_with_m() {
    let value = |m: &str| {
        let o = run(&["maximal", "--op", "phi", "--field", "one", "--m", m, "--rho", "const:1", "--probe-half", "0.2"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["result"]["max"].as_f64().unwrap()
    };
    // The smallest radius dominates a constant field; larger m only damps more.
    let (a, b) = (value("0.5"), value("4"));
    assert!(a <= 1.0 + 1e-12 && b <= a + 1e-12, "{a} {b}");
}

#[test]
fn heat1d_harmonic_matches_closed_form() {
    let o = run(&["heat1d", "--t", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["result"]["mehler_sup_relative_error"].as_f64().unwrap() < 0.01);
    assert!(v["result"]["semigroup_defect"].as_f64().unwrap() < 1e-10);
}
