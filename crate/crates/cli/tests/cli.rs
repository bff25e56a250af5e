use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_casimir"))
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A small, fast configuration: 30 positions 10 nm apart, three measured separations.
fn small_config(dir: &Path, extra_experiment: &str, extra: &str) -> PathBuf {
    let table = data_dir().join("au_optical.csv");
    let text = format!(
        r#"seed = 7
output_dir = "out"

[material]
optical_table = "{}"

[theory]
separations_nm = [240.0, 300.0, 400.0]

[experiment]
radius_um = 60.8
a0_nm = 235.0
calibration_rad_m_per_N_s = 2.0e5
v0_slope_mV_per_nm = 0.917e-3
v0_intercept_mV = -5.80
z_step_nm = 10.0
z_count = 30
noise_rad_s = 0.002
drift_rad_s_per_sweep = 0.02
casimir_model = "ideal"
{extra_experiment}

[measurement]
enabled = true
repeats = 5
separations_nm = [240.0, 300.0, 400.0]
{extra}
"#,
        table.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "", "");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "11"), (&b, "11"), (&c, "12")] {
        let o = run(&["simulate", "--config", s(&cfg), "--out", s(out), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["calibration_sweeps.csv", "pressure_sweeps.csv"] {
        let read = |d: &PathBuf| std::fs::read(d.join(name)).unwrap();
        assert_eq!(read(&a), read(&b), "{name} differs between identical seeds");
        assert_ne!(read(&a), read(&c), "{name} ignores the seed");
    }
}

#[test]
fn simulate_echoes_truth_and_rng() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "", "");
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", "99"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("calibration_sweeps.csv")).unwrap();
    for needle in [
        "#seed=99",
        "#rng=ChaCha8Rng",
        "#truth_a0_nm=235",
        "#truth_C=200000",
        "#truth_v0_slope_mV_per_nm=0.000917",
        "#truth_v0_intercept_mV=-5.8",
    ] {
        assert!(text.lines().any(|l| l == needle), "missing {needle}");
    }
}

#[test]
fn ten_voltages_are_rejected_with_the_override_named() {
    let dir = TempDir::new().unwrap();
    let voltages: Vec<String> = (0..10).map(|i| format!("{}", -150.0 + 30.0 * i as f64)).collect();
    let cfg = small_config(dir.path(), &format!("voltages_mV = [{}]", voltages.join(", ")), "");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("allow_nonstandard_voltage_count"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());

    let cfg = small_config(
        dir.path(),
        &format!("voltages_mV = [{}]\nallow_nonstandard_voltage_count = true", voltages.join(", ")),
        "",
    );
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn corrupted_sweep_row_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "", "");
    let out = dir.path().join("o");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let path = out.join("calibration_sweeps.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let target = lines.iter().position(|l| !l.starts_with('#')).unwrap() + 5;
    lines[target] = "12,abc,-1.0,0".into();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = run(&["calibrate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&format!("line {}", target + 1)), "{}", stderr(&o));
    assert!(!out.join("calibration.json").exists());
}

#[test]
fn missing_and_malformed_configs_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["theory", "--config", s(&dir.path().join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(4));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"x\"\n").unwrap();
    assert_eq!(run(&["theory", "--config", s(&bad)]).status.code(), Some(2));
    let cfg = small_config(dir.path(), "", "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("au_optical.csv", "missing.csv");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["theory", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.csv"));
}

fn curve_rows(path: &Path) -> Vec<[f64; 3]> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("a_nm"))
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn theory_single_point_grid_is_deterministic_and_plasma_exceeds_drude() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "", "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("separations_nm = [240.0, 300.0, 400.0]\n\n[experiment]", "separations_nm = [300.0]\n\n[experiment]");
    std::fs::write(&cfg, text).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["theory", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["theory_drude.csv", "theory_plasma.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
    let header = std::fs::read_to_string(a.join("theory_drude.csv")).unwrap();
    for key in ["#model=drude", "#temperature_K=300", "#l_max=5000", "#plasma_eV=9", "#relaxation_eV=0.035"] {
        assert!(header.contains(key), "missing {key}");
    }
    let drude = curve_rows(&a.join("theory_drude.csv"));
    let plasma = curve_rows(&a.join("theory_plasma.csv"));
    assert_eq!((drude.len(), plasma.len()), (1, 1));
    assert_eq!(drude[0][0], 300.0);
    assert!(drude[0][1] > 0.0 && plasma[0][1] > drude[0][1]);
}

#[test]
fn empty_experiment_curve_is_an_error_without_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "", "");
    let exp = dir.path().join("empty.csv");
    std::fs::write(&exp, "a_nm,P_Pa,sigma_Pa\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["report", "--config", s(&cfg), "--out", s(&out), "--experiment", s(&exp)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "", "");
    let out = dir.path().join("o");
    for verb in ["simulate", "calibrate", "theory"] {
        let o = run(&[verb, "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{verb}: {}", stderr(&o));
    }
    let o = run(&["report", "--config", s(&cfg), "--out", s(&out), "--compensation", "mean"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdicts"].as_array().unwrap().len(), 3);
    assert!(report["ratio_table"]["rows"].as_array().unwrap().len() == 4);
    assert!(stdout(&o).contains("electric/Casimir pressure"));
}

fn shipped(name: &str) -> (PathBuf, PathBuf) {
    (data_dir().join(format!("configs/{name}.toml")), data_dir().join(format!("synthetic/{name}")))
}

#[test]
fn shipped_cleaned_calibration_recovers_mean_potential() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = shipped("cleaned");
    let sweeps = data.join("calibration_sweeps.csv");
    let o = run(&["calibrate", "--config", s(&cfg), "--out", s(dir.path()), "--sweeps", s(&sweeps)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("calibration.json")).unwrap()).unwrap();
    let mean = cal["v0_line_mv"]["v0_mean_mv"].as_f64().unwrap();
    assert!((mean - -5.37).abs() < 0.01, "mean V0 {mean} mV");
    let a0 = cal["a0"].as_f64().unwrap();
    assert!((a0 - 235e-9).abs() < 1e-9, "a0 {a0}");
}

fn shipped_report(name: &str, compensation: &str) -> (serde_json::Value, String) {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = shipped(name);
    let o = run(&[
        "report",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--sweeps",
        s(&data.join("pressure_sweeps.csv")),
        "--calibration",
        s(&data.join("calibration.json")),
        "--compensation",
        compensation,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    (json, stdout(&o))
}

#[test]
fn shipped_demo_excludes_drude_at_short_separations() {
    let (report, out) = shipped_report("cleaned", "zero");
    assert!(out.contains("drude:  excluded over 235-"), "{out}");
    let band = &report["drude_exclusion_band"];
    let (from, to) = (band["from"].as_f64().unwrap(), band["to"].as_f64().unwrap());
    assert!(from <= 250e-9 && to >= 380e-9, "band {from}-{to}");
    assert!(report["plasma_exclusion_band"].is_null(), "{}", report["plasma_exclusion_band"]);
}

#[test]
fn shipped_uncleaned_ratio_table_starts_near_thirty_percent() {
    let (report, out) = shipped_report("uncleaned", "zero");
    let first = report["ratio_table"]["rows"][0]["percent"].as_f64().unwrap();
    assert!((first - 30.0).abs() < 0.2 * 30.0, "first row {first}%");
    assert!(out.contains("noncompensated electric force"));
}
