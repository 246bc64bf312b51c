use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn abrule(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abrule"))
        .args(args)
        .current_dir(dir)
        .env_remove("ABRULE_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small interval run, fast enough for the test suite.
fn config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{
  "geometry": {{"kind": "interval", "length": 1.0, "left": "absorbing", "right": "absorbing"}},
  "n_interior": 511,
  "kappa": 10.0,
  "state": {{"kind": "gaussian", "x0": 0.5, "p0": 0.0, "sigma_x": 0.05}},
  "t_max": 100.0{extra}
}}"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn simulate_passes_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let out = tmp.path().join("out");
    let o = abrule(&["simulate", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("uncertainty_bound"));
    assert!(text.contains("delta_num"));
    for f in ["report.json", "detection.csv", "w.svg", "energy_density.csv", "rho.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["uncertainty"]["bound"], 0.5);
}

#[test]
fn environment_variable_selects_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#", "output_dir": "from_config", "convergence_check": false"#);
    let env_dir = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_abrule"))
        .args(["simulate", cfg.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("ABRULE_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("report.json").is_file());
    assert!(!tmp.path().join("from_config").exists());

    let o = abrule(&["simulate", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("from_config/report.json").is_file());
}

#[test]
fn failing_tolerance_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#", "tolerances": {"flux_routes": 1e-12}"#);
    let o = abrule(&["simulate", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn bad_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let touching = config(tmp.path(), "");
    let text = fs::read_to_string(&touching).unwrap().replace("\"x0\": 0.5", "\"x0\": 0.1");
    fs::write(&touching, text).unwrap();
    let o = abrule(&["simulate", touching.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("boundary"));

    let garbage = tmp.path().join("garbage.json");
    fs::write(&garbage, "{\"geometry\": 3}").unwrap();
    assert_eq!(abrule(&["simulate", garbage.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    assert_eq!(abrule(&["simulate", "missing.json"], tmp.path()).status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#", "convergence_check": false"#);
    let o = abrule(
        &["sweep", cfg.to_str().unwrap(), "--axis", "kappa=1,10", "--axis", "p0=-5,0,5", "--output-dir", "."],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("kappa,p0,config_hash,status,"));
    assert!(lines[1..].iter().all(|l| l.contains(",pass,")));

    // stdout when no directory is configured; a bad axis is a usage error
    let o = abrule(&["sweep", cfg.to_str().unwrap(), "--axis", "kappa=10"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = abrule(&["sweep", cfg.to_str().unwrap(), "--axis", "colour=1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_with_failing_rows_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#", "convergence_check": false"#);
    let o = abrule(&["sweep", cfg.to_str().unwrap(), "--axis", "x0=0.5,0.97"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains(",pass,"));
    assert!(text.contains(",error,"));
}

#[test]
fn operator_check_and_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("small.json");
    // the operator-norm decay check needs dt small enough to damp every grid mode
    fs::write(
        &path,
        r#"{"geometry": {"kind": "interval", "length": 1.0, "left": "absorbing", "right": "absorbing"},
            "n_interior": 127, "dt": 1e-4, "kappa": 1.0, "convergence_check": false,
            "state": {"kind": "gaussian", "x0": 0.5, "p0": 0.0, "sigma_x": 0.05}, "t_max": 100.0}"#,
    )
    .unwrap();
    let o = abrule(&["operator-check", path.to_str().unwrap(), "--no-dilation", "--output-dir", "."], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("operator_check.json").is_file());
    assert!(!tmp.path().join("dilation_check.json").exists());

    let o = abrule(&["spectrum", path.to_str().unwrap(), "--output-dir", "."], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    // both absorbing end nodes are unknowns
    assert_eq!(csv.lines().count(), 129 + 1);
    assert_eq!(csv.lines().next(), Some("re,im"));
}

#[test]
fn coarse_operator_check_reports_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("coarse.json");
    // dt = dx leaves the top grid modes undamped and the dilation unconverged
    fs::write(
        &path,
        r#"{"geometry": {"kind": "interval", "length": 1.0, "left": "absorbing", "right": "absorbing"},
            "n_interior": 255, "kappa": 10.0, "residual_target": 1e-13,
            "state": {"kind": "bump", "center": 0.5, "half_width": 0.2, "p0": 0.0}, "t_max": 100.0}"#,
    )
    .unwrap();
    let o = abrule(&["operator-check", path.to_str().unwrap(), "--output-dir", "."], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL never_detected"));
    assert!(text.contains("ok   kennard"));
    let dil: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("dilation_check.json")).unwrap()).unwrap();
    assert!(dil["stats"]["kennard_product"].as_f64().unwrap() >= 0.5);
}

#[test]
fn minimize_reports_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        r#", "residual_target": 1e-6,
  "search": {"x0": [0.45, 0.55], "p0": [-5.0, 5.0], "sigma_x": [0.04, 0.05], "kappa": [1.0, 10.0]}"#,
    );
    let o = abrule(&["minimize", cfg.to_str().unwrap(), "--budget", "6", "--seed", "5", "--output-dir", "."], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("floor holds"));
    let search: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("search.json")).unwrap()).unwrap();
    assert!(search["evaluations"].as_u64().unwrap() <= 6);

    let plain = config(tmp.path(), "");
    assert_eq!(abrule(&["minimize", plain.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}
