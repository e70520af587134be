//! End-to-end tests of the binary: artifact layout, determinism, config
//! diagnostics, and the exit-code contract (0 success, 2 config error,
//! 3 numerical failure, 4 blowup).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coneflow::flow::Sample;
use serde_json::Value;
use tempfile::tempdir;

fn coneflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coneflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn summary(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("summary.json")).expect("summary.json exists");
    serde_json::from_str(&text).expect("summary.json parses")
}

#[test]
fn run_writes_the_artifact_set_with_healthy_verdicts() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = coneflow(&[
        "run",
        "pillowcase",
        "--resolution",
        "8",
        "--t-end",
        "0.2",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in [
        "summary.json",
        "timeseries.csv",
        "final_state.csv",
        "mesh.conemesh",
    ] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let ts = fs::read_to_string(dir.join("timeseries.csv")).unwrap();
    assert_eq!(ts.lines().next().unwrap(), Sample::CSV_HEADER);

    let s = summary(&dir);
    assert_eq!(s["termination"], "time-reached");
    assert_eq!(s["claim_scope"], "flat limit (chi = 0)");
    let verdicts = s["verdicts"].as_object().unwrap();
    assert_eq!(verdicts.len(), 7, "every invariant gets a verdict");
    for (name, v) in verdicts {
        let status = v["status"].as_str().unwrap();
        assert_ne!(status, "fail", "verdict {name} failed: {}", v["note"]);
    }
    for name in [
        "gauss_bonnet",
        "volume_drift",
        "h_envelope",
        "potential_identity",
    ] {
        assert_eq!(verdicts[name]["status"], "pass", "{name}");
    }
}

#[test]
fn identical_configs_reproduce_identical_bytes() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "scenario = pillowcase\nresolution = 8\nt_end = 0.1\nseed = 3\namplitude = 0.2\n",
    )
    .unwrap();
    let d1 = tmp.path().join("a");
    let d2 = tmp.path().join("b");
    for d in [&d1, &d2] {
        let out = coneflow(&[
            "run",
            cfg.to_str().unwrap(),
            "--output-dir",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for name in [
        "summary.json",
        "timeseries.csv",
        "final_state.csv",
        "mesh.conemesh",
    ] {
        let a = fs::read(d1.join(name)).unwrap();
        let b = fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "scenario = pillowcase\nresolution = 8\nt_end = 0.5\n").unwrap();
    let dir = tmp.path().join("out");
    let out = coneflow(&[
        "run",
        cfg.to_str().unwrap(),
        "--t-end",
        "0.05",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let t = summary(&dir)["t_final"].as_f64().unwrap();
    assert!((t - 0.05).abs() < 1e-9, "t_final = {t}");
}

#[test]
fn unknown_config_key_is_rejected_with_its_line() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "scenario = pillowcase\n# a comment\nt_end = 0.1\ndtt = 1e-3\n",
    )
    .unwrap();
    let out = coneflow(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains(":4"), "{err}");
    assert!(err.contains("dtt"), "{err}");
}

#[test]
fn malformed_value_is_rejected_with_its_line() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "scenario = pillowcase\ndt = fast\n").unwrap();
    let out = coneflow(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains(":2"), "{err}");
    assert!(err.contains("`dt`"), "{err}");
}

#[test]
fn unknown_scenario_is_an_input_error() {
    let out = coneflow(&["run", "pillowcse"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("pillowcase"), "{}", stderr(&out));
}

#[test]
fn conflicting_cone_keys_are_rejected() {
    let out = coneflow(&[
        "run",
        "hyperbolic-triangle",
        "--alpha",
        "0.25 0.25 0.25",
        "--divisor",
        "-0.75 -0.75 -0.75",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn blowup_termination_still_writes_artifacts_and_exits_4() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = coneflow(&[
        "run",
        "football",
        "--beta1",
        "-0.8",
        "--beta2",
        "0.9",
        "--amplitude",
        "0.3",
        "--resolution",
        "64",
        "--seed",
        "1",
        "--dt",
        "1e-3",
        "--t-end",
        "20",
        "--blowup-threshold",
        "30",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    for name in [
        "summary.json",
        "timeseries.csv",
        "final_state.csv",
        "profile.csv",
    ] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let s = summary(&dir);
    assert_eq!(s["termination"], "blowup");
    assert_eq!(s["claim_scope"], "no convergence claim (chi > 0)");
    // conservation holds independently of the runaway
    assert_eq!(s["verdicts"]["gauss_bonnet"]["status"], "pass");
}

#[test]
fn steady_stop_reports_a_fitted_decay_rate() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = coneflow(&[
        "run",
        "hyperbolic-triangle",
        "--resolution",
        "10",
        "--steady-tol",
        "4e-7",
        "--t-end",
        "30",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let s = summary(&dir);
    assert_eq!(s["termination"], "steady-state");
    assert_eq!(s["claim_scope"], "constant curvature (chi < 0)");
    let rate = s["decay_rate"].as_f64().expect("rate reported");
    let r2 = s["decay_fit_r2"].as_f64().unwrap();
    assert!(rate < 0.0, "rate = {rate}");
    assert!(r2 >= 0.99, "r2 = {r2}");
    let verdicts = s["verdicts"].as_object().unwrap();
    for (name, v) in verdicts {
        let status = v["status"].as_str().unwrap();
        assert_ne!(status, "fail", "verdict {name} failed: {}", v["note"]);
    }
}

#[test]
fn sk_study_gaps_shrink_as_the_holes_do() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = coneflow(&[
        "sk-study",
        "football",
        "--resolution",
        "512",
        "--k-min",
        "3",
        "--k-max",
        "6",
        "--t-end",
        "0.01",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.join("sk_study.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,radius,active_nodes,sup_diff_next,sup_diff_full"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let full: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(
        full.windows(2).all(|w| w[1] < w[0]),
        "gaps to the full surface do not decrease: {full:?}"
    );
    for row in &rows[..3] {
        let gap: f64 = row[3].parse().unwrap();
        assert!(gap.is_finite() && gap > 0.0, "consecutive gap {gap}");
    }
    let last_gap: f64 = rows[3][3].parse().unwrap();
    assert!(last_gap.is_nan(), "last level has no next level");
}

#[test]
fn sk_study_rejects_a_surface_without_tips() {
    let out = coneflow(&["sk-study", "torus", "--resolution", "8"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn sk_study_level_below_the_grid_is_an_input_error() {
    let out = coneflow(&["sk-study", "football", "--resolution", "64", "--k-max", "12"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(
        stderr(&out).contains("truncation level"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn poisson_study_reports_the_probe_per_resolution() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("out");
    let out = coneflow(&[
        "poisson-study",
        "--resolutions",
        "64 128",
        "--beta",
        "-0.5",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.join("poisson_study.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "resolution,nodes,probe_sup_grad_sq");
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let probe: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(probe.is_finite() && probe > 0.0, "probe {probe}");
    }
}
