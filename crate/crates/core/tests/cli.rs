use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ufus::cli::{run_subcommand, sha256_hex, RunOptions, Subcommand};
use ufus::io::{read_channel_file, write_channel_file, ChannelFile};

const FRAME: &str = r#"
[model]
masses = [8.083, 8.083, 8.083, 8.083, 8.083]
stiffnesses = [1.24e4, 1.24e4, 1.24e4, 1.24e4, 1.24e4]
damping_ratios = [0.016]
dt = 0.01
"#;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{FRAME}\n{body}")).unwrap();
    path
}

fn impact_body(extra: &str) -> String {
    format!(
        r#"
[scenario]
kind = "multi_impact"
duration = 3.0
seed = 1
noise = {{ snr = [200.0] }}
taps = [{{ floor = 2, start = 0.5, count = 2 }}, {{ floor = 5, start = 1.5 }}]
{extra}

[sensors]
channels = ["d2", "a4", "a5"]
"#
    )
}

fn opts(config: &Path, out: &Path, seed: Option<u64>) -> RunOptions {
    RunOptions {
        config: config.to_path_buf(),
        out: out.to_path_buf(),
        seed,
        estimator: None,
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body(""));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_subcommand(Subcommand::Simulate, &opts(&cfg, &a, Some(42))).unwrap();
    run_subcommand(Subcommand::Simulate, &opts(&cfg, &b, Some(42))).unwrap();
    let (fa, fb) = (dir_contents(&a), dir_contents(&b));
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["config.toml", "manifest.json", "measurements.csv", "truth.csv"]);
    assert_eq!(fa, fb);

    let c = tmp.path().join("c");
    run_subcommand(Subcommand::Simulate, &opts(&cfg, &c, Some(43))).unwrap();
    assert_ne!(fs::read(a.join("measurements.csv")).unwrap(), fs::read(c.join("measurements.csv")).unwrap());
}

#[test]
fn manifest_records_seed_hash_and_version() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body(""));
    let out = tmp.path().join("out");
    let summary = run_subcommand(Subcommand::Simulate, &opts(&cfg, &out, Some(7))).unwrap();
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let normalized = fs::read(out.join("config.toml")).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_sha256"], sha256_hex(&normalized));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(summary.manifest.artifacts.len(), 3);
    // The seed override is part of the normalized configuration.
    assert!(String::from_utf8(normalized).unwrap().contains("seed = 7"));
}

#[test]
fn truth_file_has_inputs_then_floor_responses() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body(""));
    let out = tmp.path().join("out");
    run_subcommand(Subcommand::Simulate, &opts(&cfg, &out, None)).unwrap();
    let truth = read_channel_file(out.join("truth.csv")).unwrap();
    let mut expected = vec!["p2".to_string(), "p5".to_string()];
    for kind in ["d", "v", "a"] {
        expected.extend((1..=5).map(|f| format!("{kind}{f}")));
    }
    assert_eq!(truth.names, expected);
    assert_eq!(truth.len(), 301);
    let meas = read_channel_file(out.join("measurements.csv")).unwrap();
    assert_eq!(meas.names, ["d2", "a4", "a5"]);
}

#[test]
fn smoother_latency_is_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body("\n[estimator]\nkind = \"us\"\n"));
    let out = tmp.path().join("out");
    let summary = run_subcommand(Subcommand::Estimate, &opts(&cfg, &out, None)).unwrap();
    let run = &summary.manifest.runs[0];
    assert_eq!(run.name, "us");
    assert_eq!(run.latency_steps, 20);
    assert!((run.latency_seconds - 0.2).abs() < 1e-12);
    let est = read_channel_file(out.join("estimate_us.csv")).unwrap();
    // Samples 1 ..= 300 - 20 carry smoothed estimates.
    assert_eq!(est.len(), 280);
    assert_eq!(est.times[0], 0.01);
}

#[test]
fn tune_writes_selection_records() {
    let tmp = tempfile::tempdir().unwrap();
    let body = impact_body("") + "\n[tuner]\nq_min = 1e-14\nq_max = 1e-6\nspacing = 1.0\n";
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    run_subcommand(Subcommand::Tune, &opts(&cfg, &out, None)).unwrap();
    let text = fs::read_to_string(out.join("selection_tuned-uf.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,selected_q,selected_error"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 300);
    assert_eq!(rows[0][0], 1.0);
    for r in &rows {
        let exponent = r[1].log10();
        assert!((exponent - exponent.round()).abs() < 1e-9 && (-14.0..-6.0).contains(&exponent.round()));
        assert!(r[2] >= 0.0);
    }
}

#[test]
fn augmented_tuner_adds_the_input_level_column() {
    let tmp = tempfile::tempdir().unwrap();
    let body = impact_body("")
        + "\n[estimator]\nkind = \"akf\"\n\n[tuner]\nq_min = 1e-12\nq_max = 1e-8\nq_input_min = 1e-2\nq_input_max = 1e2\nakf_spacing = 2.0\n";
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    run_subcommand(Subcommand::Tune, &opts(&cfg, &out, None)).unwrap();
    let text = fs::read_to_string(out.join("selection_tuned-akf.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("step,selected_q,selected_q_input,selected_error"));
}

fn estimate_from_file(tmp: &Path, meas: &ChannelFile, tag: &str) -> Vec<u8> {
    let data = tmp.join(format!("{tag}.csv"));
    write_channel_file(&data, meas).unwrap();
    let body = format!(
        r#"
[scenario]
kind = "multi_impact"
duration = 3.0
noise = {{ snr = [200.0] }}
measurements = "{tag}.csv"
taps = [{{ floor = 2, start = 0.5 }}, {{ floor = 5, start = 1.5 }}]

[sensors]
channels = ["d2", "a4", "a5"]
"#
    );
    let cfg = tmp.join(format!("{tag}.toml"));
    fs::write(&cfg, format!("{FRAME}\n{body}")).unwrap();
    let out = tmp.join(format!("out-{tag}"));
    run_subcommand(Subcommand::Estimate, &opts(&cfg, &out, None)).unwrap();
    fs::read(out.join("estimate_uf.csv")).unwrap()
}

#[test]
fn shuffled_measurement_columns_give_the_same_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body(""));
    let sim = tmp.path().join("sim");
    run_subcommand(Subcommand::Simulate, &opts(&cfg, &sim, None)).unwrap();
    let meas = read_channel_file(sim.join("measurements.csv")).unwrap();

    let order = [2, 0, 1];
    let shuffled = ChannelFile::new(
        order.iter().map(|&j| meas.names[j].clone()).collect(),
        meas.times.clone(),
        meas.values.select_columns(&order),
    )
    .unwrap();
    let base = estimate_from_file(tmp.path(), &meas, "base");
    let perm = estimate_from_file(tmp.path(), &shuffled, "perm");
    assert_eq!(base, perm);
}

#[test]
fn missing_measurement_column_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body(""));
    let sim = tmp.path().join("sim");
    run_subcommand(Subcommand::Simulate, &opts(&cfg, &sim, None)).unwrap();
    let meas = read_channel_file(sim.join("measurements.csv")).unwrap();
    let partial = ChannelFile::new(meas.names[..2].to_vec(), meas.times.clone(), meas.values.columns(0, 2).into_owned())
        .unwrap();
    write_channel_file(tmp.path().join("partial.csv"), &partial).unwrap();
    let body = impact_body("measurements = \"partial.csv\"");
    let cfg = write_config(tmp.path(), &body);
    let err = run_subcommand(Subcommand::Estimate, &opts(&cfg, &tmp.path().join("out"), None)).unwrap_err();
    assert!(err.to_string().contains("a5"), "{err}");
}

#[test]
fn compare_orders_the_smoother_below_the_filter_on_acceleration_only_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run_subcommand(Subcommand::Compare, &opts(&configs_dir().join("acceleration_only.toml"), &out, None)).unwrap();
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let value = |name: &str| -> f64 {
        report
            .lines()
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|c| c[0] == name && c[1] == "displacement" && c[2] == "all")
            .map(|c| c[3].parse().unwrap())
            .unwrap_or_else(|| panic!("no displacement row for {name} in\n{report}"))
    };
    assert!(value("us") < value("uf"));
    assert!(out.join("report.txt").exists());
    assert!(out.join("covariance.csv").exists());
}

#[test]
fn binary_reports_errors_on_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &(impact_body("") + "\n[estimator]\npinv_tol = 1e-8\n"));
    let output = Command::new(env!("CARGO_BIN_EXE_ufus"))
        .args(["estimate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8(output.stderr).unwrap();
    let line = stderr.trim();
    assert_eq!(line.lines().count(), 1);
    assert!(line.starts_with("error kind=config message="), "{line}");
    assert!(line.contains("estimator"), "{line}");
    assert!(!tmp.path().join("out/manifest.json").exists());
}

#[test]
fn binary_runs_simulate_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &impact_body(""));
    let out = tmp.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_ufus"))
        .args(["estimate", "--seed", "5", "--estimator", "akf", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["runs"][0]["name"], "akf");
    assert!(out.join("estimate_akf.csv").exists());
}
