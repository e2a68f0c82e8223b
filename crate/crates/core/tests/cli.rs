//! End-to-end tests of the command line binary: exit codes, file layout,
//! config handling, and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

fn nonholo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn verify_exit_codes_distinguish_pass_fail_and_misuse() {
    let dir = tempfile::tempdir().unwrap();
    let out_arg = dir.path().join("ok");

    let pass = nonholo(&[
        "verify",
        "--model",
        "robot",
        "--candidate",
        "gamma2",
        "--out",
        out_arg.to_str().unwrap(),
    ]);
    assert_eq!(pass.status.code(), Some(0), "{}", stderr(&pass));
    assert!(stdout(&pass).contains("PASSED"));

    let fail = nonholo(&[
        "verify",
        "--model",
        "robot",
        "--candidate",
        "gamma2_perturbed",
        "--out",
        dir.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(stdout(&fail).contains("FAILED"));

    let misuse = nonholo(&["verify", "--model", "rocket", "--candidate", "gamma2"]);
    assert_eq!(misuse.status.code(), Some(2));
    assert!(stderr(&misuse).contains("unknown model"));

    let no_candidate = nonholo(&["verify", "--model", "robot"]);
    assert_eq!(no_candidate.status.code(), Some(2));

    let no_model = nonholo(&["verify"]);
    assert_eq!(no_model.status.code(), Some(2));
}

#[test]
fn simulate_writes_the_advertised_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&[
        "simulate",
        "--model",
        "robot",
        "--candidate",
        "gamma3",
        "--steps",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52); // header + initial sample + 50 steps
    assert!(csv.starts_with("t,q_x,q_y,q_theta,q_psi,"));
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"model\": \"robot\""));
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "model": "robot",
            "steps": 500,
            "candidate": "gamma2",
            "initial": { "q": [0.0, 0.0, 0.0, 0.0], "candidate": "gamma2" }
        }"#,
    )
    .unwrap();
    let out = nonholo(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--steps",
        "20",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("for 20 steps"));
    let csv = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn malformed_configs_are_reported_as_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, r#"{ "model": "robot", "tpyo": 1 }"#).unwrap();
    let out = nonholo(&["simulate", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let missing = nonholo(&["simulate", "--config", "/definitely/not/here.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let status = nonholo(&[
            "simulate",
            "--model",
            "robot",
            "--candidate",
            "gamma3",
            "--steps",
            "100",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(status.status.code(), Some(0));
    };
    let d1 = dir.path().join("a");
    let d2 = dir.path().join("b");
    run(&d1);
    run(&d2);
    for file in ["trajectory.csv", "summary.json"] {
        let a = std::fs::read(d1.join(file)).unwrap();
        let b = std::fs::read(d2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn grid_flag_reshapes_the_verification_domain() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&[
        "verify",
        "--model",
        "robot",
        "--candidate",
        "gamma3",
        "--grid",
        "-2:2:3,-2:2:3,0:6.2832:9,-1:1:3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("\"pass\": true"));

    let bad = nonholo(&[
        "verify",
        "--model",
        "robot",
        "--candidate",
        "gamma3",
        "--grid",
        "0:1:0",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reduce_summarizes_the_quotient_system() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&[
        "reduce",
        "--model",
        "robot",
        "--steps",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("theta, psi"));
    assert!(dir.path().join("reduce.json").exists());
}

#[test]
fn list_models_names_every_registered_model() {
    let out = nonholo(&["list-models"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for name in ["robot", "synthetic-flat", "synthetic-curved"] {
        assert!(text.contains(name), "missing {name}");
    }
    assert!(text.contains("gamma2_perturbed"));

    let twice = nonholo(&["list-models"]);
    assert_eq!(stdout(&twice), text);
}
