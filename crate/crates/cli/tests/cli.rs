use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use entroflow::diagnostics::record;
use entroflow::experiments::{build_scenario, ScenarioName, ScenarioSpec};
use entroflow::io::read_trajectory_json;
use entroflow::KernelFamily;
use serde_json::Value;

fn entroflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entroflow"))
        .args(args)
        .current_dir(dir)
        .env_remove("ENTROFLOW_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn divergent_scenario_passes_under_assert() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroflow(
        tmp.path(),
        &["run", "scenario", "sym3", "--kernel", "cauchy", "--a", "0.235", "--t-end", "1e6", "--assert", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&tmp.path().join("o/report.json"));
    assert_eq!(report["scenario"], "sym3");
    let fits = report["exponent_fits"].as_array().unwrap();
    let diam = fits.iter().find(|f| f["quantity"] == "diam").unwrap();
    assert!((diam["slope"].as_f64().unwrap() - 0.25).abs() < 0.02);
    assert!(report["separation"]["min_ratio"].as_f64().unwrap() >= 0.2);
    assert!(report["acceptance"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    for f in ["config.json", "trajectory.csv", "trajectory.json"] {
        assert!(tmp.path().join("o").join(f).exists(), "{f}");
    }
}

#[test]
fn out_of_range_parameter_names_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroflow(tmp.path(), &["scenario", "sym3", "--a", "0.3"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("(0, 1/4)"), "{}", stderr(&out));
    let out = entroflow(tmp.path(), &["scenario", "sym4", "--a", "0.13"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("(0, 1/8)"), "{}", stderr(&out));
}

#[test]
fn too_few_points_for_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "affinity": {"matrix": {"n": 3, "entries": [0, 0.1666666666666667, 0.1666666666666667, 0.1666666666666667, 0, 0.1666666666666667, 0.1666666666666667, 0.1666666666666667, 0]}},
        "initial": {"points": [[0, 0], [1, 0], [0, 1]]}
    }"#;
    fs::write(tmp.path().join("config.json"), cfg).unwrap();
    let out = entroflow(tmp.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("requires n > s+1"), "{}", stderr(&out));
}

fn random_config(dir: &Path) {
    let cfg = r#"{
        "kernel": "cauchy",
        "affinity": {"matrix": {"n": 5, "entries": [
            0, 0.05, 0.05, 0.05, 0.05,
            0.05, 0, 0.05, 0.05, 0.05,
            0.05, 0.05, 0, 0.05, 0.05,
            0.05, 0.05, 0.05, 0, 0.05,
            0.05, 0.05, 0.05, 0.05, 0]}},
        "initial": {"random": {"s": 2, "seed": 11, "scale": 0.5}},
        "t_end": 50,
        "output": {"coords": true}
    }"#;
    fs::write(dir.join("config.json"), cfg).unwrap();
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    random_config(tmp.path());
    for dir in ["a", "b"] {
        let out = entroflow(tmp.path(), &["run", "--config", "config.json", "--out", dir]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["config.json", "trajectory.csv", "trajectory.json", "report.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let out = entroflow(tmp.path(), &["run", "--config", "config.json", "--seed", "12", "--out", "c"]);
    assert_eq!(code(&out), 0);
    assert_ne!(
        fs::read(tmp.path().join("a/trajectory.json")).unwrap(),
        fs::read(tmp.path().join("c/trajectory.json")).unwrap()
    );
}

#[test]
fn random_init_requires_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"affinity": {"file": "p.json"}, "initial": {"random": {"s": 2}}}"#;
    fs::write(tmp.path().join("config.json"), cfg).unwrap();
    let out = entroflow(tmp.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn trajectory_json_reproduces_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroflow(tmp.path(), &["scenario", "sym4", "--t-end", "1e3", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let traj = read_trajectory_json(&tmp.path().join("o/trajectory.json")).unwrap();
    let s = build_scenario(&ScenarioSpec::new(ScenarioName::Sym4, KernelFamily::Cauchy).with_t_end(1e3)).unwrap();
    assert!(traj.snapshots.len() > 10);
    for snap in &traj.snapshots {
        let again = record(&snap.state, &s.affinity, &s.kernel).unwrap();
        assert_eq!(again.cost.to_bits(), snap.record.cost.to_bits());
        assert_eq!(again.diam.to_bits(), snap.record.diam.to_bits());
        assert_eq!(again.second_moment.to_bits(), snap.record.second_moment.to_bits());
        assert_eq!(again.min_sqdist.to_bits(), snap.record.min_sqdist.to_bits());
    }
}

#[test]
fn integration_failure_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    random_config(tmp.path());
    let out = entroflow(tmp.path(), &["run", "--config", "config.json", "--max-steps", "5", "--out", "o"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("o/trajectory.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
    assert!(!tmp.path().join("o/report.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&entroflow(tmp.path(), &["scenario", "sym5"])), 2);
    assert_eq!(code(&entroflow(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn kernel_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroflow(tmp.path(), &["verify-kernel", "cauchy", "--assert"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("midpoint convexity"));
    assert_eq!(code(&entroflow(tmp.path(), &["verify-kernel", "power:0.5"])), 3);
    assert_eq!(code(&entroflow(tmp.path(), &["verify-kernel", "power:0.5", "--unchecked"])), 0);
    assert_eq!(code(&entroflow(tmp.path(), &["verify-kernel", "power:0.5", "--unchecked", "--assert"])), 5);
    let out = entroflow(tmp.path(), &["verify-kernel", "power:3", "--json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["sup_log_gamma_prime"].as_f64().unwrap(), 3.0);
}

#[test]
fn calibrate_writes_loadable_affinity() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("data.csv"), "x,y,z\n0,0,0\n1,0,0\n0,2,0\n0,0,3\n1,1,1\n").unwrap();
    let out = entroflow(tmp.path(), &["calibrate", "--dataset", "data.csv", "--perplexity", "2.5", "--out", "cal"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let p = entroflow::io::read_affinity(&tmp.path().join("cal/affinity.json")).unwrap();
    assert_eq!(p.n(), 5);
    let bw = read_json(&tmp.path().join("cal/bandwidths.json"));
    assert_eq!(bw["sigma"].as_array().unwrap().len(), 5);
    let out = entroflow(tmp.path(), &["calibrate", "--dataset", "data.csv", "--perplexity", "9", "--out", "cal2"]);
    assert_eq!(code(&out), 3);
    let out = entroflow(tmp.path(), &["calibrate", "--dataset", "missing.csv", "--perplexity", "2"]);
    assert_eq!(code(&out), 1);

    // the calibrated matrix drives a run
    let cfg = r#"{"affinity": {"file": "cal/affinity.json"}, "initial": {"random": {"s": 2, "seed": 1}}, "t_end": 5}"#;
    fs::write(tmp.path().join("run.json"), cfg).unwrap();
    let out = entroflow(tmp.path(), &["run", "--config", "run.json", "--out", "r", "--assert"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroflow(
        tmp.path(),
        &["sweep", "--scenario", "sym3", "--param", "a", "--values", "0.2,0.235,0.3", "--t-end", "100", "--jobs", "2", "--out", "sw"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let summary = read_json(&tmp.path().join("sw/sweep.json"));
    let entries = summary.as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[0]["exit_code"], 0);
    assert_eq!(entries[1]["exit_code"], 0);
    assert_eq!(entries[2]["exit_code"], 3);
    assert!(tmp.path().join("sw/a=0.2/report.json").exists());
    assert!(tmp.path().join("sw/a=0.235/trajectory.csv").exists());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_entroflow"))
        .args(["scenario", "collapse3", "--t-end", "10"])
        .current_dir(tmp.path())
        .env("ENTROFLOW_OUT", tmp.path().join("root"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("root/collapse3/report.json").exists());
}
