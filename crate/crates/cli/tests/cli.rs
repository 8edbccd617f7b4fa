use std::path::Path;
use std::process::{Command, Output};

use presence_lab::commands;
use presence_lab::ExperimentConfig;
use presence_core::brw::v_grid;
use presence_core::{GridSpec, OffspringModel, Runner, TestFunction};

fn lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_presence-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove(presence_lab::WORKERS_ENV)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn analyze_uniform_binary_reports_p_bar() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"model": {"name": "uniform-binary"}, "params": {"p_grid": {"lo": 0, "hi": 4, "count": 9}}}"#);
    let out = lab(&["analyze", "--config", &cfg, "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p_bar = column(&read(&tmp.path().join("o"), "exponents.csv"), "p_bar");
    assert!((p_bar[0] - 2f64.sqrt()).abs() < 1e-6, "{p_bar:?}");
    let phi = read(&tmp.path().join("o"), "phi.csv");
    for (p, v) in column(&phi, "p").iter().zip(column(&phi, "phi")) {
        assert!((v - p / (p + 2.0)).abs() < 1e-12);
    }
}

#[test]
fn analyze_gaussian_spectrum_is_convex() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"model": {"name": "gaussian-2"}, "params": {"theta_grid": {"lo": -3, "hi": 3, "count": 61}}}"#);
    let out = lab(&["analyze", "--config", &cfg, "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&tmp.path().join("o"), "spectrum.csv");
    let lam = column(&csv, "lambda");
    assert_eq!(lam.len(), 61);
    assert!(lam.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] >= 0.0));
    let theta = column(&csv, "theta");
    for (t, l) in theta.iter().zip(&lam) {
        assert!((l - (2f64.ln() + t * t / 2.0)).abs() < 1e-12);
    }
    assert!(csv.lines().nth(1).unwrap().contains("e"), "17-digit scientific reals");
}

#[test]
fn empty_theta_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"model": {"name": "gaussian-2"}, "params": {"theta_grid": {"lo": -3, "hi": 3, "count": 0}}}"#);
    let out = lab(&["analyze", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.theta_grid"));
    assert!(!tmp.path().join("o").exists(), "nothing written before validation");
}

#[test]
fn unknown_keys_and_operations_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for body in [
        r#"{"model": {"name": "gaussian-2"}, "operation": "u_grid", "params": {"n": 2, "depth": 3}}"#,
        r#"{"model": {"name": "gaussian-2"}, "operation": "nope"}"#,
        r#"{"model": {"name": "uniform-binary"}, "operation": "u_grid", "params": {"n": 2}}"#,
        r#"{"model": {"name": "uniform-binary"}, "operation": "uv", "params": {"p": 2}}"#,
    ] {
        let cfg = write_config(tmp.path(), "c.json", body);
        let out = lab(&["brw", "--config", &cfg, "--out", "o"], tmp.path());
        assert_eq!(out.status.code(), Some(2), "{body}");
    }
    let cfg = write_config(tmp.path(), "c.json", r#"{"model": {"name": "uniform-binary"}, "operation": "uv", "params": {"p": 2}}"#);
    let out = lab(&["frag", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.t"));
}

#[test]
fn brw_u_grid_geometric_origin_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"model": {"name": "geometric-origin", "q": 0.3333333333333333}, "operation": "u_grid",
            "params": {"n": 20, "f": {"kind": "cell", "at": 0, "delta": 1}, "targets": [0]}}"#,
    );
    let out = lab(&["brw", "--config", &cfg, "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&tmp.path().join("o"), "targets.csv");
    let (ns, us) = (column(&csv, "n"), column(&csv, "value"));
    assert_eq!(ns.len(), 21);
    for (n, u) in ns.iter().zip(us) {
        let exact = 1.0 / (2f64.powi(*n as i32 + 1) - 1.0);
        assert!((u - exact).abs() < 1e-12, "n={n}: {u} vs {exact}");
    }
}

#[test]
fn frag_martingale_at_zero_is_identically_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"model": {"name": "uniform-binary"}, "operation": "martingale", "params": {"p": 0, "t": 2}}"#,
    );
    let out = lab(&["frag", "--config", &cfg, "--runs", "300", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let values = column(&read(&tmp.path().join("o"), "martingale.csv"), "value");
    assert_eq!(values.len(), 300);
    assert!(values.iter().all(|v| *v == 1.0));
}

#[test]
fn same_config_and_seed_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"model": {"name": "uniform-binary"}, "operation": "uv", "params": {"p": 2, "t": 4, "n_runs": 20000}, "seed": 11}"#,
    );
    let a = lab(&["frag", "--config", &cfg, "--out", "a"], tmp.path());
    let b = lab(&["frag", "--config", &cfg, "--out", "b", "--workers", "3"], tmp.path());
    assert!(a.status.success() && b.status.success());
    assert_eq!(read(&tmp.path().join("a"), "report.json"), read(&tmp.path().join("b"), "report.json"));
    let c = lab(&["frag", "--config", &cfg, "--out", "c", "--seed", "12"], tmp.path());
    assert!(c.status.success());
    assert_ne!(read(&tmp.path().join("a"), "report.json"), read(&tmp.path().join("c"), "report.json"));
    assert!(tmp.path().join("a/wall_time.txt").exists());
}

#[test]
fn verify_analytic_is_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let one = lab(&["verify", "analytic", "--out", "one", "--workers", "1"], tmp.path());
    let four = Command::new(env!("CARGO_BIN_EXE_presence-lab"))
        .args(["verify", "analytic", "--out", "four"])
        .current_dir(tmp.path())
        .env(presence_lab::WORKERS_ENV, "4")
        .output()
        .unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    for f in ["report.json", "summary.csv"] {
        assert_eq!(read(&tmp.path().join("one"), f), read(&tmp.path().join("four"), f), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("one"), "report.json")).unwrap();
    assert_eq!(report["criteria"].as_array().unwrap().len(), 2);
    assert!(String::from_utf8_lossy(&one.stdout).lines().all(|l| l.contains("PASS")));
}

#[test]
fn verify_rejects_config_and_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(&["verify", "analytic", "--runs", "10", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = lab(&["verify", "everything"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_echo_round_trips() {
    let text = r#"{"model": {"name": "gaussian-2"}, "operation": "v_tilted",
        "params": {"n": 5, "theta": 2, "c": 0.25, "n_runs": 2000}, "seed": 3, "out": "somewhere"}"#;
    let cfg = ExperimentConfig::parse(text).unwrap();
    let report = commands::brw(&cfg, &Runner::new(cfg.seed)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    let echo = ExperimentConfig::parse(&json["config"].to_string()).unwrap();
    assert_eq!(echo, ExperimentConfig { out: None, ..cfg });
    assert_eq!(report.reports["v_tilted"].n, 2000);
}

#[test]
fn population_simulation_matches_mean_recursion() {
    let text = r#"{"model": {"name": "gaussian-2"}, "operation": "population",
        "params": {"n": 3, "c": -0.5, "n_runs": 40000}, "seed": 5}"#;
    let cfg = ExperimentConfig::parse(text).unwrap();
    let report = commands::brw(&cfg, &Runner::new(cfg.seed)).unwrap();
    let f = TestFunction::indicator(0.0, 1.0).unwrap();
    let v = v_grid(&OffspringModel::gaussian2(), &f, 3, &GridSpec::default().with_delta(0.005).with_targets([-0.5])).unwrap();
    let mc = &report.reports["v_mc"];
    assert!(mc.z_score(v.at(-0.5)).abs() < 4.0, "{} ± {} vs {}", mc.estimate, mc.stderr, v.at(-0.5));
    assert!(report.reports["u_mc"].estimate <= mc.estimate);
}
