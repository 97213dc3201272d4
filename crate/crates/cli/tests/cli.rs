//! End-to-end tests of the command-line interface: file formats, exit
//! codes, and byte-stable outputs.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use stackelberg_align::fixtures::S1_JSON;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stackelberg-align"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stackelberg-align-cli-{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("s1.json"), S1_JSON).unwrap();
    dir
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn solve_writes_the_equilibrium_profile() {
    let dir = workdir("solve");
    let out = bin()
        .current_dir(&dir)
        .args(["solve", "--scenario", "s1.json", "--gamma-user", "0.6", "--entry", "ae"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(doc["converged"], serde_json::json!(true));
    assert_eq!(doc["profile"]["theta1"]["f_a"], serde_json::json!(0.0));
    assert_eq!(doc["profile"]["theta1"]["f_b"], serde_json::json!(1.0));
    assert_eq!(doc["profile"]["theta2"]["f_a"], serde_json::json!(1.0));
    assert_eq!(doc["rationales"]["theta1"], serde_json::json!("empty_set_disengage"));
    assert_eq!(doc["rationales"]["theta2"], serde_json::json!("steered"));
    assert!((doc["margins"]["theta1"].as_f64().unwrap() - 10.0).abs() < 1e-9);
    assert!((doc["margins"]["theta2"].as_f64().unwrap() + 1.0).abs() < 1e-9);
}

#[test]
fn thresholds_csv_matches_the_closed_forms() {
    let dir = workdir("thresholds");
    let out = bin()
        .current_dir(&dir)
        .args(["thresholds", "--scenario", "s1.json", "--cost", "0.05"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "type_id,gamma_crit_nosig,gamma_crit_sig,reduction");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "theta1");
    assert!((row[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-9);
    assert!((row[2].parse::<f64>().unwrap() - 0.65 / 1.65).abs() < 1e-9);
    assert!((row[3].parse::<f64>().unwrap() - 0.175).abs() < 1e-9);
}

#[test]
fn thresholds_without_cost_leaves_signal_columns_empty() {
    let dir = workdir("thresholds-nocost");
    let out = bin()
        .current_dir(&dir)
        .args(["thresholds", "--scenario", "s1.json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("theta1,"));
    assert!(row.ends_with(",,"));
}

#[test]
fn boundary_reads_solver_output_and_sweeps_the_simplex() {
    let dir = workdir("boundary");
    let solve = bin()
        .current_dir(&dir)
        .args(["solve", "--scenario", "s1.json", "--out", "eq.json"])
        .output()
        .unwrap();
    assert!(solve.status.success());
    let out = bin()
        .current_dir(&dir)
        .args(["boundary", "--scenario", "s1.json", "--profile", "eq.json", "--grid", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda_1,lambda_2,margin,choice");
    let choices: Vec<&str> =
        lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(choices, vec!["A", "A", "B"]);
}

#[test]
fn boundary_samples_the_full_simplex_for_three_types() {
    let dir = workdir("boundary3");
    fs::write(
        dir.join("s3.json"),
        r#"{"types":[
            {"id":"u1","alpha_a":0.2,"alpha_b":0.5,"r_a":1.0,"r_b":2.0},
            {"id":"u2","alpha_a":0.25,"alpha_b":0.5,"r_a":2.0,"r_b":1.0},
            {"id":"u3","alpha_a":0.3,"alpha_b":0.6,"r_a":1.5,"r_b":0.5}],
            "prior":[0.4,0.3,0.3],"gamma_alg":0.9,"gamma_user":0.6}"#,
    )
    .unwrap();
    let out = bin()
        .current_dir(&dir)
        .args([
            "boundary", "--scenario", "s3.json", "--profile", "solve", "--grid", "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda_1,lambda_2,lambda_3,margin,choice");
    // Simplex lattice with 4 subdivisions over 3 cells: C(6, 2) = 15 rows,
    // each summing to one.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 15);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let total: f64 = cells[..3].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(cells[4] == "A" || cells[4] == "B");
    }
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = workdir("simulate");
    let args = [
        "simulate",
        "--scenario",
        "s1.json",
        "--cost",
        "0.05",
        "--profile",
        "solve",
        "--type",
        "theta1",
        "--steps",
        "60",
        "--reps",
        "200",
        "--seed",
        "17",
    ];
    for out_file in ["a.csv", "b.csv"] {
        let out = bin()
            .current_dir(&dir)
            .args(args)
            .args(["--out", out_file])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.join("a.csv")).unwrap();
    let b = fs::read(dir.join("b.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,value_actual,value_baseline,regret");
    assert_eq!(text.lines().count(), 61);
}

#[test]
fn simulate_regret_is_linear_for_the_myopic_user() {
    let dir = workdir("simulate-linear");
    let out = bin()
        .current_dir(&dir)
        .args([
            "simulate",
            "--scenario",
            "s1.json",
            "--gamma-user",
            "0.4",
            "--profile",
            "solve",
            "--type",
            "theta1",
            "--steps",
            "50",
            "--reps",
            "1",
            "--seed",
            "3",
            "--out",
            "r.csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(dir.join("r.csv")).unwrap();
    for (t, line) in text.lines().skip(1).enumerate() {
        let regret: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(regret, (t + 1) as f64 - 2.0);
    }
}

#[test]
fn exit_codes_separate_failure_classes() {
    let dir = workdir("exits");

    // Validation failure: a prior that is not a probability vector.
    fs::write(
        dir.join("bad.json"),
        r#"{"types":[{"id":"a","alpha_a":0.2,"alpha_b":0.5,"r_a":1.0,"r_b":2.0}],
            "prior":[0.6,0.6],"gamma_alg":0.9,"gamma_user":0.6}"#,
    )
    .unwrap();
    let out = bin()
        .current_dir(&dir)
        .args(["solve", "--scenario", "bad.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap())
            .unwrap();
    assert_eq!(err["code"], serde_json::json!(3));
    assert!(err["kind"].as_str().unwrap().contains("Prior"));

    // Solver failure: the exact indifference discount.
    let out = bin()
        .current_dir(&dir)
        .args(["solve", "--scenario", "s1.json", "--gamma-user", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    // Usage failure.
    let out = bin().current_dir(&dir).args(["solve", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_on_a_single_type_scenario_and_fails_on_degenerate_gamma() {
    let dir = workdir("verify");
    fs::write(
        dir.join("solo.json"),
        r#"{"types":[{"id":"solo","alpha_a":0.25,"alpha_b":0.5,"r_a":1.0,"r_b":2.0}],
            "prior":[1.0],"gamma_alg":0.8,"gamma_user":0.6}"#,
    )
    .unwrap();
    let out = bin()
        .current_dir(&dir)
        .args(["verify", "--scenario", "solo.json", "--seed", "5", "--draws", "4", "--grid", "31"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "verify failed: {}\n{}",
        stdout_of(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout_of(&out).contains("PASS"));

    // On the two-type fixture at the exact indifference discount, theta1's
    // steerable set is empty, the solver refuses to pick a branch, the
    // no-deviation check cannot run, and verify exits 5.
    let out = bin()
        .current_dir(&dir)
        .args([
            "verify",
            "--scenario",
            "s1.json",
            "--gamma-user",
            "0.5",
            "--seed",
            "5",
            "--draws",
            "1",
            "--grid",
            "11",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert!(stdout_of(&out).contains("FAIL"));
}
