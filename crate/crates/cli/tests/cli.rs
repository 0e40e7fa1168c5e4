use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barrier-es"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let text = r#"{
        "problem": "noisy-sphere-4",
        "engine": {
            "lambda": 8, "lambda_prime": 4, "sigma0": 0.1, "sigma_es0": 1.0,
            "gamma_up": 1.01, "gamma_down": 0.99, "sigma_min": 0.001, "sigma_max": 0.1,
            "kappa": 0.005, "d_max": 10.0, "eps_c": 1.0, "psi_kind": "guided_antithetic",
            "beta": 5.0, "alpha": 0.5, "m": 4, "budget": 25
        },
        "schedule": { "mode": "fixed_batch", "eps_f": 0.001, "p": 0.75, "n_fixed": 10, "n_cap": 100 }
    }"#;
    let path = dir.join("small.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn run_writes_a_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let trace = dir.path().join("t.csv");
    let out = cli(&[
        "run",
        "--config",
        &config,
        "--seed",
        "3",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iteration,sigma,sigma_es,success,f_est,f_exact,violation,lyapunov,samples,accuracy_event,wall_ms\n"));
    assert_eq!(text.lines().count(), 26);
    let summary = json(&out);
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["iterations"], 25);
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = cli(&[
            "run",
            "--config",
            &config,
            "--seed",
            "11",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let trace = dir.path().join("t.csv");
    let text = fs::read_to_string(small_config(dir.path()))
        .unwrap()
        .replace("\"lambda\": 8, ", "");
    fs::write(&path, text).unwrap();
    let out = cli(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let out = cli(&[
        "run",
        "--config",
        "/nonexistent/config.json",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = cli(&[
        "bench",
        "--suite",
        "nope",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));

    assert_eq!(cli(&[]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = cli(&[
        "run",
        "--config",
        &config,
        "--out",
        "/nonexistent/dir/t.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // fewer than ten traces
    let out = cli(&[
        "audit-lyapunov",
        "--traces",
        dir.path().to_str().unwrap(),
        "--nu",
        "0.95",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&[
        "audit-lyapunov",
        "--traces",
        dir.path().to_str().unwrap(),
        "--nu",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_then_lyapunov_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("lyap");
    let out = cli(&[
        "bench",
        "--suite",
        "lyapunov",
        "--seeds",
        "10",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out).as_array().unwrap().len(), 10);
    assert!(out_dir.join("seed-9.csv").exists());
    assert!(out_dir.join("config.json").exists());

    let out = cli(&[
        "audit-lyapunov",
        "--traces",
        out_dir.to_str().unwrap(),
        "--nu",
        "0.95",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["seeds"], 10);
    assert!(report["fraction_non_positive"].as_f64().unwrap() >= 0.95);
}

#[test]
fn accuracy_check_reports_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("acc");
    // the saved suite configuration doubles as a run configuration
    let out = cli(&[
        "bench",
        "--suite",
        "accuracy",
        "--seeds",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let config = out_dir.join("config.json");
    let out = cli(&[
        "check-accuracy",
        "--config",
        config.to_str().unwrap(),
        "--iters",
        "60",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["audited"], 60);
    assert_eq!(report["schedule"], "theoretical");
    let freq = report["frequency"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&freq));
}
