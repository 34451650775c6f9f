//! End-to-end checks of the `nestdoa` binary: subcommand output formats,
//! config diagnostics, seed/output overrides, and CSV determinism.

use std::path::Path;
use std::process::{Command, Output};

fn nestdoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestdoa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn nestdoa_in(dir: &Path, envs: &[(&str, &str)], args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestdoa"))
        .current_dir(dir)
        .envs(envs.iter().copied())
        .args(args)
        .output()
        .expect("binary runs")
}

const SWEEP_TOML: &str = r#"
[geometry]
kind = "nested"
M1 = 4
M2 = 4
d1 = 0.5

[scenario]
doas_deg = [15.0, 17.0]

[sweep]
kind = "snr"
snr_db = [10.0]
n_snapshots = 80

[run]
trials = 4
seed = 99
estimators = ["music-ula", "nested-music", "ms-kai-nested-music"]

[kai]
grid_step_deg = 0.2
"#;

#[test]
fn geometry_report_lists_positions_and_aperture() {
    let out = nestdoa(&["geometry", "--nested", "4", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0 1 2 3 4 9 14 19"), "{text}");
    assert!(text.contains("lags -19..19 (39 distinct)"), "{text}");
    assert!(text.contains("virtual aperture: 20"), "{text}");
}

#[test]
fn geometry_json_is_parseable() {
    let out = nestdoa(&["geometry", "--nested", "3", "3", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sensors"], serde_json::json!([0, 1, 2, 3, 7, 11]));
    assert_eq!(v["virtual_aperture"], 12);
    assert_eq!(v["coarray_contiguous"], true);
}

#[test]
fn complexity_prints_both_counts() {
    let out = nestdoa(&[
        "complexity",
        "--m",
        "8",
        "--n",
        "150",
        "--p",
        "2",
        "--iterations",
        "2",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("multiplications"), "{text}");
    assert!(text.contains("additions"), "{text}");
    assert!(text.contains("111347207"), "{text}");
    assert!(text.contains("109895757"), "{text}");
}

#[test]
fn spectrum_writes_two_column_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("spectrum.csv");
    let out = nestdoa(&[
        "spectrum",
        "--snr",
        "10",
        "--seed",
        "7",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "angle_deg,value");
    // Default 0.05° step spans (-90, 90) exclusive.
    assert_eq!(text.lines().count(), 1 + 3599);
    for line in text.lines().skip(1).take(5) {
        let mut parts = line.split(',');
        parts.next().unwrap().parse::<f64>().unwrap();
        let value: f64 = parts.next().unwrap().parse().unwrap();
        assert!(value > 0.0);
    }
}

#[test]
fn spectrum_dumps_kai_trace_and_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("spectrum.csv");
    let trace = dir.path().join("trace.json");
    let cov = dir.path().join("covariance.csv");
    let out = nestdoa(&[
        "spectrum",
        "--snr",
        "5",
        "--seed",
        "3",
        "--step",
        "0.2",
        "--out",
        csv.to_str().unwrap(),
        "--kai-trace",
        trace.to_str().unwrap(),
        "--dump-covariance",
        cov.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(v["mu_grid"].as_array().unwrap().len(), 11);
    assert_eq!(v["iterations"].as_array().unwrap().len(), 3);
    assert!(v["iterations"][0]["u_curve"].as_array().unwrap().len() == 11);

    // Covariance dump: 20 rows of 20 re/im pairs.
    let cov_text = std::fs::read_to_string(&cov).unwrap();
    assert_eq!(cov_text.lines().count(), 20);
    assert_eq!(cov_text.lines().next().unwrap().split(',').count(), 40);
}

#[test]
fn sweep_snr_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, SWEEP_TOML).unwrap();
    let out_dir = dir.path().join("results");
    let out = nestdoa(&[
        "sweep-snr",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("snr_db,estimator,rmse_deg,prob_resolution,trials,failures\n"));
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.contains("10,ms-kai-nested-music,"));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["run"]["seed"], 99);
    assert!(json["points"][0]["stats"][0]["mean_runtime_ms"].is_number());
}

#[test]
fn sweep_rejects_mismatched_kind() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, SWEEP_TOML).unwrap();
    let out = nestdoa(&["sweep-snapshots", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("sweep.kind"), "{err}");
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, SWEEP_TOML.replace("trials = 4", "trials = 0")).unwrap();
    let out = nestdoa(&["sweep-snr", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("run.trials"), "{err}");
}

#[test]
fn estimator_and_seed_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, SWEEP_TOML).unwrap();
    let out_dir = dir.path().join("results");
    let out = nestdoa(&[
        "sweep-snr",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--estimators",
        "nested-music",
        "--seed",
        "123",
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1);
    assert!(csv.contains("nested-music"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["run"]["seed"], 123);
}

#[test]
fn output_dir_env_override_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, SWEEP_TOML).unwrap();
    let env_dir = dir.path().join("from-env");
    let out = nestdoa_in(
        dir.path(),
        &[("NESTDOA_OUTPUT_DIR", env_dir.to_str().unwrap())],
        &["sweep-snr", "--config", config.to_str().unwrap()],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(env_dir.join("sweep.csv").exists());
}

#[test]
fn shipped_presets_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for (name, is_snr) in [("snr_sweep.toml", true), ("snapshot_sweep.toml", false)] {
        let path = root.join("configs").join(name);
        let config = nestdoa::harness::ExperimentConfig::load(&path)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(
            matches!(config.sweep, nestdoa::harness::SweepSpec::Snr { .. }),
            is_snr
        );
        assert_eq!(config.scenario.doas_deg, vec![15.0, 17.0]);
        assert_eq!(config.run.estimators.len(), 3);
    }
}

#[test]
fn sweep_csv_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, SWEEP_TOML).unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "2"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = nestdoa(&[
            "sweep-snr",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(out.status.success());
        outputs.push(std::fs::read(out_dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
