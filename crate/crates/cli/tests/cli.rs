use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cipd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cipd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn noise_budget_defaults_resolve_below_half_an_electron() {
    let v = stdout_json(&cipd(&["noise-budget"]));
    let r = v["resolution_electrons"].as_f64().unwrap();
    assert!(r <= 0.5 && (r - 0.387).abs() < 0.005, "{r}");
    assert!((v["cds_noise_voltage_volts"].as_f64().unwrap() - 0.786e-6).abs() < 0.005e-6);
    assert_eq!(v["parameters"]["detector"]["quantum_efficiency"], 0.8);
}

#[test]
fn noise_budget_of_silent_spectrum_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"spectrum": {"amplitude_1hz_volts_per_rthz": 0.0, "flicker_exponent": 1.0, "white_floor_volts_per_rthz": 0.0}}"#,
    );
    let v = stdout_json(&cipd(&["noise-budget", "--config", &config]));
    assert_eq!(v["resolution_electrons"].as_f64().unwrap(), 0.0);
}

#[test]
fn malformed_and_invalid_configs_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"detector": {"gm": "#);
    let out = cipd(&["noise-budget", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let config = write_config(dir.path(), r#"{"detector": {"quantum_efficiency": 1.5}}"#);
    let out = cipd(&["noise-budget", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detector.quantum_efficiency"));

    let config = write_config(dir.path(), r#"{"detector": {"gain": 1.0}}"#);
    assert_eq!(cipd(&["noise-budget", "--config", &config]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_io_error() {
    let out = cipd(&["noise-budget", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = cipd(&["simulate", "--seed", "1", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn quadrature_budget_exhaustion_exits_with_non_convergence() {
    let out = cipd(&["noise-budget", "--rel-tol", "1e-14", "--max-intervals", "8"]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipd(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn simulate_is_byte_reproducible_and_records_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schedule": {"mean_photons": 6.0, "pulse_period_seconds": 1.0, "pulse_width_seconds": 0.01, "n_pulses": 20}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cipd(&["simulate", "--config", &config, "--seed", "77", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["trace.csv", "manifest.json", "config.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["carriers"].as_array().unwrap().len(), 20);
    assert!(!dir.path().read_dir().unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .ends_with(".tmp")));

    // Replaying the recorded config reproduces the hash.
    let c = dir.path().join("c");
    let o = cipd(&["simulate", "--config", a.join("config.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let replay: Value = serde_json::from_slice(&fs::read(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(replay["config_hash"], manifest["config_hash"]);
    assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(c.join("trace.csv")).unwrap());
}

#[test]
fn noiseless_simulate_then_analyze_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "detector": {"dark_rate_per_second": 0.0},
            "spectrum": {"amplitude_1hz_volts_per_rthz": 0.0, "flicker_exponent": 1.0, "white_floor_volts_per_rthz": 0.0},
            "schedule": {"mean_photons": 9.0, "pulse_period_seconds": 1.0, "pulse_width_seconds": 0.01, "n_pulses": 50},
            "reset_period_seconds": 10.0
        }"#,
    );
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    for format in ["csv", "json"] {
        let o = cipd(&["simulate", "--config", &config, "--seed", "5", "--out", out, "--format", format]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let trace = Path::new(out).join(format!("trace.{format}"));
        let fit = stdout_json(&cipd(&["analyze", "--config", &config, "--out", out, trace.to_str().unwrap()]));

        let manifest: Value = serde_json::from_slice(&fs::read(Path::new(out).join("manifest.json")).unwrap()).unwrap();
        let injected: Vec<u64> = manifest["carriers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        let readout = fs::read_to_string(Path::new(out).join("readout.csv")).unwrap();
        let rows = csv_rows(&readout);
        assert_eq!(rows[0], ["window_index", "raw_electrons", "count", "flag"]);
        let counts: Vec<u64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(counts, injected);

        let mean = injected.iter().sum::<u64>() as f64 / injected.len() as f64;
        assert!((fit["lambda_hat"].as_f64().unwrap() - mean).abs() < 1e-12);
        assert_eq!(fit["n_samples"], 50);
        for key in ["std_error", "chi_square", "dof", "p_value", "histogram"] {
            assert!(fit.get(key).is_some(), "{key}");
        }
        let hist = fs::read_to_string(Path::new(out).join("histogram.csv")).unwrap();
        assert!(hist.starts_with("k,occurrences,expected"));
    }
}

#[test]
fn analyze_reports_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    fs::write(&trace, "t,v\n0,1\n").unwrap();
    let out = cipd(&["analyze", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time_s"));
}

#[test]
fn analyze_fig4_schedule_yields_one_window_per_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schedule": {"mean_photons": 8.54, "pulse_period_seconds": 1.0, "pulse_width_seconds": 0.01, "n_pulses": 796}}"#,
    );
    let out = dir.path().to_str().unwrap();
    assert!(cipd(&["simulate", "--config", &config, "--seed", "3", "--out", out, "--format", "json"])
        .status
        .success());
    // The JSON trace carries its own schedule, so no config is needed here.
    let trace = dir.path().join("trace.json");
    let fit = stdout_json(&cipd(&["analyze", "--out", out, "--format", "json", trace.to_str().unwrap()]));
    assert_eq!(fit["n_samples"], 796);
    let readout: Value = serde_json::from_slice(&fs::read(dir.path().join("readout.json")).unwrap()).unwrap();
    assert_eq!(readout["counts"].as_array().unwrap().len(), 796);
}

#[test]
fn dark_run_reports_a_rate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schedule": {"mean_photons": 0.0, "pulse_period_seconds": 1.0, "pulse_width_seconds": 0.01, "n_pulses": 3600},
            "sample_rate_hertz": 200.0}"#,
    );
    let out = dir.path().to_str().unwrap();
    assert!(cipd(&["simulate", "--config", &config, "--seed", "11", "--out", out])
        .status
        .success());
    let trace = dir.path().join("trace.csv");
    let fit = stdout_json(&cipd(&["analyze", "--config", &config, trace.to_str().unwrap()]));
    let per_hour = fit["dark_rate"]["rate_per_second"].as_f64().unwrap() * 3600.0;
    assert!((per_hour - 500.0).abs() < 3.0 * 500f64.sqrt(), "{per_hour}");
}

#[test]
fn sweep_rows_follow_amplitude_linearity_and_cutoff_ordering() {
    let budget = stdout_json(&cipd(&["noise-budget"]));
    let single = cipd(&["sweep", "--param", "amplitude_1hz=470e-9"]);
    let rows = csv_rows(&String::from_utf8_lossy(&single.stdout));
    assert_eq!(rows.len(), 2);
    let r: f64 = rows[1][3].parse().unwrap();
    assert_eq!(r, budget["resolution_electrons"].as_f64().unwrap());

    let out = cipd(&["sweep", "--param", "amplitude_1hz=235e-9,470e-9,940e-9", "--format", "json"]);
    let v = stdout_json(&out);
    let res: Vec<f64> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row["resolution_electrons"].as_f64().unwrap())
        .collect();
    assert!((res[0] / res[1] - 0.5).abs() < 1e-6 && (res[2] / res[1] - 2.0).abs() < 1e-6);

    let out = cipd(&["sweep", "--param", "f_cutoff=5,20,80"]);
    let rows = csv_rows(&String::from_utf8_lossy(&out.stdout));
    let noise: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(noise.windows(2).all(|w| w[0] <= w[1]), "{noise:?}");

    let dir = tempfile::tempdir().unwrap();
    let out = cipd(&[
        "sweep",
        "--param",
        "t_integration=0.5,1",
        "--param",
        "pulse_width=0.01,0.02",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows = csv_rows(&fs::read_to_string(dir.path().join("sweep.csv")).unwrap());
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][..2], ["t_integration", "pulse_width"]);
}

#[test]
fn sweep_rejects_unknown_parameters() {
    let out = cipd(&["sweep", "--param", "temperature=4,300"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("temperature"));
}
