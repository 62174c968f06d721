//! Black-box runs of the `lorentz` binary.

use std::path::Path;
use std::process::{Command, Output};

fn lorentz(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lorentz"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
fn kernels_selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lorentz(&["kernels-selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out.stdout);
    assert!(r["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(r["passed"], true);
}

#[test]
fn single_obstacle_charge_is_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "n_values = [1]\na = 0.3\n").unwrap();
    let out = lorentz(&["solve", "--config", "c.toml", "--out", "run", "--method", "pointcharge"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/charges.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("i,x,y,z,q"));
    let f: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!(lines.next().is_none());
    // (1/4πa) q = −h(y) for one obstacle.
    let y = [f[1], f[2], f[3]];
    let d2 = (y[0] - 0.1).powi(2) + y[1].powi(2) + (y[2] + 0.1).powi(2);
    let h = (-d2 / 0.36).exp();
    let q = -4.0 * std::f64::consts::PI * 0.3 * h;
    assert!((f[4] - q).abs() < 1e-13 * q.abs());
    assert!(dir.path().join("run/resolved_config.toml").exists());
    assert!(dir.path().join("run/summary.json").exists());
}

#[test]
fn converge_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "n_values = [16, 32, 64, 128]\ntrials = 3\n").unwrap();
    let out = lorentz(&["converge", "--config", "c.toml", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    let summary = json(&std::fs::read(dir.path().join("run/summary.json")).unwrap());
    assert!(summary["comparisons"]["hat_vs_limit"]["fit"]["slope"].is_number());
    assert_eq!(summary["rows"], 12);
    assert!(dir.path().join("run/plot_convergence.py").exists());
}

#[test]
fn resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "n_values = [8, 16]\ntrials = 2\n").unwrap();
    let out = lorentz(&["converge", "--config", "c.toml", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("run/resolved_config.toml")).unwrap();
    let cfg = lorentz_cli::config::parse(&text).unwrap();
    assert_eq!(lorentz_cli::config::parse(&cfg.to_toml()).unwrap(), cfg);
    assert!(cfg.a.is_some() && cfg.regularity.c.is_some() && cfg.probe.is_some());
    // Re-running the resolved config reproduces the rows.
    let again = lorentz(&["converge", "--config", "run/resolved_config.toml", "--out", "again"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("run/trials.csv")).unwrap(),
        std::fs::read(dir.path().join("again/trials.csv")).unwrap()
    );
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "lamda = 2.0\n").unwrap();
    let out = lorentz(&["converge", "--config", "bad.toml", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = json(&out.stderr);
    assert_eq!(err["error"], "validation");
    assert!(!dir.path().join("run").exists());
    // Outputs never overwrite a previous experiment.
    std::fs::create_dir(dir.path().join("used")).unwrap();
    std::fs::write(dir.path().join("used/x"), "").unwrap();
    let out = lorentz(&["sample-config", "--out", "used"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resonant_potential_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let v0 = -(std::f64::consts::FRAC_PI_2.powi(2));
    std::fs::write(
        dir.path().join("c.toml"),
        format!("[potential]\nshape = \"square_well\"\namplitude = {v0:?}\nradius = 1.0\n"),
    )
    .unwrap();
    let out = lorentz(&["scattering-length", "--config", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let r = json(&out.stdout);
    assert_eq!(r["resonance_nystrom"], true);
    assert_eq!(r["resonance_ode"], true);
    assert_eq!(json(&out.stderr)["error"], "solver");
}

#[test]
fn sampled_configurations_feed_check_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "n_values = [50]\n").unwrap();
    let out = lorentz(&["sample-config", "--config", "c.toml", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let out = lorentz(&["check-config", "--config", "c.toml", "s/config_n50.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out.stdout);
    assert_eq!(r["reports"][0]["n"], 50);
    assert!(r["reports"][0]["min_pair_distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn fluctuations_record_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "n_values = [64]\ntrials = 40\n").unwrap();
    let out = lorentz(
        &["fluctuations", "--config", "c.toml", "--out", "f", "--variant", "symmetric"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&std::fs::read(dir.path().join("f/summary.json")).unwrap());
    let c = &s["samples"][0]["covariance"];
    assert!(c["verbatim"].is_number() && c["symmetric"].is_number());
    assert_eq!(c["headline_variant"], "symmetric");
    assert!(s["eta_definition"].as_str().unwrap().contains("psi_hat_N"));
    let eta = std::fs::read_to_string(dir.path().join("f/eta.csv")).unwrap();
    assert_eq!(eta.lines().count(), 41);
}

#[test]
fn every_solve_method_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "n_values = [6]\n").unwrap();
    for m in ["pointcharge", "aghh", "microscopic", "effective"] {
        let out = lorentz(&["solve", "--config", "c.toml", "--out", m, "--method", m], dir.path());
        assert_eq!(out.status.code(), Some(0), "{m}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json(&out.stdout)["method"], m);
    }
    assert!(dir.path().join("microscopic/remainder.csv").exists());
    assert!(dir.path().join("effective/effective.csv").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            lorentz_cli::config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
