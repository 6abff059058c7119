//! End-to-end checks of the command-line surface: flag/file precedence,
//! exit codes, and output-file handling.

use std::process::Command;

fn qmc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn evolve_emits_trajectory_csv() {
    let out = qmc(&[
        "evolve", "--dim", "2", "--lambda", "1", "--zeta", "1", "--p", "0", "--t", "3",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,p1,p2"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "p = 0.5\nt = 4\n").unwrap();
    // Flag p wins over the file; t comes from the file.
    let out = qmc(&[
        "evolve",
        "--config",
        path.to_str().unwrap(),
        "--p",
        "0",
        "--zeta",
        "0",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6, "horizon 4 from the file: {text}");
    // With p = 0 winning over the file's 0.5, step 2 carries the pure
    // interference value 1 - (1 - cos(4))/2.
    let row2: Vec<&str> = text.lines().nth(3).unwrap().split(',').collect();
    let p11: f64 = row2[1].parse().unwrap();
    let pure = 1.0 - 0.5 * (1.0 - 4.0f64.cos());
    assert!((p11 - pure).abs() < 1e-12, "expected {pure}, got {p11}");
}

#[test]
fn config_domain_error_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "p = 1.5\n").unwrap();
    let out = qmc(&["evolve", "--config", path.to_str().unwrap(), "--t", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("p"), "{err}");
}

#[test]
fn malformed_config_line_is_numbered() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "p = 0.2\nwhatever\n").unwrap();
    let out = qmc(&["evolve", "--config", path.to_str().unwrap(), "--t", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = qmc(&["evolve", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.to_lowercase().contains("usage"), "{err}");
}

#[test]
fn domain_error_exits_one() {
    let out = qmc(&["evolve", "--p", "1.5", "--t", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_check_passes_on_small_instances() {
    let out = qmc(&[
        "oracle-check", "--dim", "2", "--t", "6", "--p", "0.4", "--zeta", "0.5", "--lambda", "1",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pass"), "{text}");
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let args = [
        "evolve", "--t", "5", "--p", "0.2", "--zeta", "0.5", "--seed", "9",
    ];
    let stdout_run = qmc(&args);
    assert!(stdout_run.status.success());
    let mut file_args = args.to_vec();
    file_args.push("--out");
    file_args.push(path.to_str().unwrap());
    let file_run = qmc(&file_args);
    assert!(file_run.status.success());
    assert_eq!(std::fs::read(&path).unwrap(), stdout_run.stdout);
}

#[test]
fn verify_reports_every_check() {
    let out = qmc(&["verify", "--seed", "11"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "double_stochasticity",
        "trace_preservation",
        "oracle_equivalence",
        "semigroup_bounds",
        "contraction_bound",
    ] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
    assert_eq!(text.matches("PASS").count(), 5, "{text}");
}

#[test]
fn sweep_preset_covers_the_grid() {
    let out = qmc(&["sweep", "--table", "6", "--workers", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // 5 measurement probabilities x 10 exponents plus the header.
    assert_eq!(text.lines().count(), 51);
    assert!(text.starts_with("p,zeta,lambda,dim,graph,model,"));
}

#[test]
fn period_command_reports_ratios_near_one() {
    let out = qmc(&["period", "--lambda", "1", "--zeta", "1.2", "--t", "30000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    let ratio: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!((ratio - 1.0).abs() < 0.05, "late ratio {ratio}");
}
