use std::path::Path;
use std::process::{Command, Output};

use veloq_core::codes::flying_ancilla_circuit;
use veloq_core::compiler::{ArrayGeometry, EventBody, Schedule};

fn veloq(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_veloq"));
    cmd.args(args).env_remove("VELOQ_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_figure_is_a_usage_error() {
    let o = veloq(&["reproduce", "fig99"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig2d"));
}

#[test]
fn zones_prints_transfer_cost() {
    let o = veloq(&["zones", "--dv", "0.05", "--jerk", "1.5e8"], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("transfer_time_s,transfer_distance_m"));
    let vals: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((vals[0] / 25.8e-6 - 1.0).abs() < 0.01, "{vals:?}");
    assert!((vals[1] / 860e-9 - 1.0).abs() < 0.01, "{vals:?}");
}

#[test]
fn spectator_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.csv");
    let o = veloq(&["curve", "spectator", "--lambda", "698e-9", "--out", path(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d_m,d_over_lambda,infidelity");
    assert_eq!(lines.len(), 302);
    assert_eq!(lines[1], "0.0,0.0,1.0");
    let last: Vec<f64> = lines[301].split(',').map(|s| s.parse().unwrap()).collect();
    assert!((last[0] - 3.0 * 698e-9).abs() < 1e-18 && last[1] == 3.0);
}

#[test]
fn compile_writes_a_valid_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let ir = dir.path().join("ir.json");
    let geo = dir.path().join("geo.json");
    let out = dir.path().join("schedule.json");
    std::fs::write(&ir, flying_ancilla_circuit(0.1, true, None).to_json().unwrap()).unwrap();
    std::fs::write(&geo, serde_json::to_string(&ArrayGeometry::flying_ancilla(4.3e-6, 2e-6)).unwrap()).unwrap();
    let o = veloq(&["compile", "--ir", path(&ir), "--geometry", path(&geo), "--out", path(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = Schedule::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(s.events.iter().filter(|e| matches!(e.body, EventBody::FlybyGate { .. })).count(), 8);
    assert!(veloq_core::compiler::validate(&s).is_empty());

    // too few sites for the circuit
    std::fs::write(&geo, serde_json::to_string(&ArrayGeometry::tweezer_grid(2, 1, 4.3e-6, 4e-6)).unwrap()).unwrap();
    let o = veloq(&["compile", "--ir", path(&ir), "--geometry", path(&geo), "--out", path(&out)], &[]);
    assert!(!o.status.success());
}

fn moves_csv(args: &[&str], env: &[(&str, &str)]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let mut full = vec!["reproduce", "figS1", "--out", path(dir.path())];
    full.extend_from_slice(args);
    // few RB shots may fail the recovery check; only the written data matters here
    let o = veloq(&full, env);
    assert!(o.status.code().is_some(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(dir.path().join("figS1_moves.csv")).unwrap()
}

#[test]
fn seed_precedence_flag_over_env_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nseed = 5\nrb_shots = 4000\n").unwrap();
    let c = path(&cfg);
    let file = moves_csv(&["--config", c], &[]);
    let env = moves_csv(&["--config", c], &[("VELOQ_SEED", "6")]);
    let flag = moves_csv(&["--config", c, "--seed", "5"], &[("VELOQ_SEED", "6")]);
    assert_ne!(file, env);
    assert_eq!(file, flag);
    assert_eq!(env, moves_csv(&["--config", c, "--seed", "6"], &[]));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nshots = 0\n").unwrap();
    assert!(!veloq(&["reproduce", "zones", "--config", path(&cfg), "--out", path(dir.path())], &[]).status.success());
    std::fs::write(&cfg, "[physics]\nlambda_clok = 1.0\n").unwrap();
    assert!(!veloq(&["reproduce", "zones", "--config", path(&cfg), "--out", path(dir.path())], &[]).status.success());
    let o = veloq(&["reproduce", "zones", "--out", path(dir.path())], &[("VELOQ_SEED", "seven")]);
    assert!(!o.status.success());
}

#[test]
fn noise_off_cluster_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = veloq(&["reproduce", "fig4", "--noise", "off", "--shots", "300", "--out", path(dir.path())], &[]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("fig4.csv")).unwrap();
    let post: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(post, vec!["1.0"; 8]);
}
