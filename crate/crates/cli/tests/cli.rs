use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tfqkd::params::{save_link, LinkConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tfqkd"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("TFQKD_FIXTURE_DIR", fixtures()).output().expect("spawn tfqkd")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_1() {
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["analyze"]); // missing required flags
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_reproduces_published_key_rates_from_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let external = dir.path().join("external.json");
    std::fs::write(&external, r#"{"n1_prime": 1.616e6, "e1ph_prime": 0.1336}"#).unwrap();
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "--format",
        "json",
        "analyze",
        "--tally",
        "table_s5_403km.json",
        "--params",
        "params_symmetric_403km.json",
        "--aopp-external",
        external.to_str().unwrap(),
        "--total-db",
        "67.83",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let skr = report["skr_per_signal"].as_f64().unwrap();
    assert!((skr / 2.934e-7 - 1.0).abs() < 0.01, "skr {skr}");
    let ratio = report["ratio_skr_skc0"].as_f64().unwrap();
    assert!((ratio / 1.23 - 1.0).abs() < 0.02, "ratio {ratio}");
    // stdout carries the same report
    let stdout: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("json report on stdout");
    assert_eq!(stdout["skr_per_signal"], report["skr_per_signal"]);
    // manifest written with a digest for the report
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("report.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "analyze");
    assert!(manifest["outputs"][report_path.to_str().unwrap()].is_string());
}

#[test]
fn simulate_is_deterministic_and_composes_with_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let link_path = dir.path().join("link.json");
    save_link(&LinkConfig::symmetric(50.0), &link_path).unwrap();

    let tally_a = dir.path().join("a.json");
    let tally_b = dir.path().join("b.json");
    for out_path in [&tally_a, &tally_b] {
        let out = run(&[
            "--seed",
            "7",
            "simulate",
            "--params",
            "params_symmetric_403km.json",
            "--link",
            link_path.to_str().unwrap(),
            "--n-slots",
            "20000000",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    let a = std::fs::read(&tally_a).unwrap();
    let b = std::fs::read(&tally_b).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical tallies");

    // golden path: the simulated tally feeds analyze without schema friction
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "analyze",
        "--tally",
        tally_a.to_str().unwrap(),
        "--params",
        "params_symmetric_403km.json",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(report_path.exists());
}

#[test]
fn empty_simulation_is_ok_but_analysis_of_it_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let link_path = dir.path().join("link.json");
    save_link(&LinkConfig::symmetric(50.0), &link_path).unwrap();
    let tally = dir.path().join("empty.json");
    let out = run(&[
        "simulate",
        "--params",
        "params_symmetric_403km.json",
        "--link",
        link_path.to_str().unwrap(),
        "--n-slots",
        "0",
        "--out",
        tally.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));

    let out = run(&[
        "analyze",
        "--tally",
        tally.to_str().unwrap(),
        "--params",
        "params_symmetric_403km.json",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad_params.json");
    let mut text =
        std::fs::read_to_string(fixtures().join("params_symmetric_403km.json")).unwrap();
    text = text.replace("\"p_z\": 0.735", "\"p_z\": 1.4");
    std::fs::write(&bad, text).unwrap();
    let out = run(&[
        "analyze",
        "--tally",
        "table_s5_403km.json",
        "--params",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn plob_curve_matches_reference_and_guards_zero_length() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("plob.csv");
    let out = run(&[
        "plob",
        "--lengths",
        "0,100,300,615.59",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "length_km,total_db,skc0_per_signal");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][2], "inf", "0 km must hit the infinity sentinel");
    let values: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] > w[1]), "bound must decrease with length");
    assert!((values[2] / 6.565e-11 - 1.0).abs() < 0.01, "615.59 km value {}", values[2]);
}

#[test]
fn optimize_writes_params_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let link_path = dir.path().join("link.json");
    save_link(&LinkConfig::symmetric(100.0), &link_path).unwrap();
    let space_path = dir.path().join("space.json");
    std::fs::write(
        &space_path,
        r#"{
            "mu_z": {"lo": 0.35, "hi": 0.55, "steps": 3},
            "mu_1": {"lo": 0.16, "hi": 0.16, "steps": 1},
            "mu_2": {"lo": 0.5, "hi": 0.5, "steps": 1},
            "eps_a": {"lo": 0.2, "hi": 0.4, "steps": 3},
            "eps_b": {"lo": 0.2, "hi": 0.4, "steps": 3},
            "p_x": {"lo": 0.265, "hi": 0.265, "steps": 1},
            "p_mu1": {"lo": 0.706, "hi": 0.706, "steps": 1},
            "p_mu2": {"lo": 0.216, "hi": 0.216, "steps": 1},
            "mu_0": 0.0002,
            "constraint_tol": 1e-9,
            "visibility": 0.968,
            "descent_rounds": 1
        }"#,
    )
    .unwrap();
    let params_out = dir.path().join("optimized.json");
    let out = run(&[
        "optimize",
        "--link",
        link_path.to_str().unwrap(),
        "--space",
        space_path.to_str().unwrap(),
        "--n-tot",
        "1000000000000",
        "--out",
        params_out.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let params = tfqkd::params::load_params(&params_out).unwrap();
    let report = tfqkd::params::validate(&params);
    assert!(report.violations.is_empty());
    assert!(dir.path().join("optimized.trace.csv").exists());
}

#[test]
fn stabilize_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let noise_path = dir.path().join("noise.json");
    std::fs::write(&noise_path, r#"{"delta_nu_hz": 0.0, "fibre_rate_std_hz": 0.0}"#).unwrap();
    let pid_path = dir.path().join("pid.json");
    std::fs::write(
        &pid_path,
        r#"{"sample_rate_hz": 2e5, "setpoint_rad": 1.5707963267948966,
            "kp": 0.3, "ki": 0.03, "kd": 0.0,
            "reference_count_rate_hz": 1.3e7, "shot_noise": false}"#,
    )
    .unwrap();
    let trace_path = dir.path().join("trace.csv");
    let out = run(&[
        "stabilize",
        "--noise",
        noise_path.to_str().unwrap(),
        "--pid",
        pid_path.to_str().unwrap(),
        "--duration-s",
        "0.5",
        "--histogram-bin-hz",
        "100",
        "--out",
        trace_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(&trace_path).unwrap();
    assert!(csv.starts_with("t_s,applied_phase_rad,residual_phase_rad"));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("trace.summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["residual_std_rad"].as_f64().unwrap() < 1e-9);
    assert!(dir.path().join("trace.hist.csv").exists());
}
