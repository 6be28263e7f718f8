//! The `simulate`, `estimate`, `tune` and `compare` subcommands.
//!
//! Each run writes its artifacts into the output directory, then the
//! normalized configuration and a `manifest.json`. The manifest is written
//! last, so its presence means every artifact before it was written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{self, EstimatorKind, RunConfig, RunSpec, Simulation};
use crate::error::{Error, Result};
use crate::estimators::{
    run_estimator, AugmentedKalmanFilter, CovarianceHygiene, FilterState, UniversalFilter, UniversalSmoother,
};
use crate::eval::{compare_report, covariance_diagnostics, CovarianceReport, EstimateTrace, VarianceDiagnostics};
use crate::io::{self, format_value, ChannelFile};
use crate::model::StructuralSystem;
use crate::sim::{MeasurementSet, NoiseSpec, TruthTrajectory};
use crate::tuner::{akf_array, run_array, uf_array, us_array, SelectionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Estimate,
    Tune,
    Compare,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Estimate => "estimate",
            Subcommand::Tune => "tune",
            Subcommand::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides `scenario.seed`.
    pub seed: Option<u64>,
    /// Overrides `estimator.kind`.
    pub estimator: Option<EstimatorKind>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestRun {
    pub name: String,
    /// Samples of future data behind each reported estimate.
    pub latency_steps: usize,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
    pub runs: Vec<ManifestRun>,
    pub artifacts: Vec<String>,
}

/// Artifacts of one run, relative to the output directory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        io::write_atomic(self.dir.join(name), body.as_bytes())?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn channels(&mut self, name: &str, file: &ChannelFile) -> Result<()> {
        io::write_channel_file(self.dir.join(name), file)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses the configuration, applies the overrides and runs `cmd`.
pub fn run_subcommand(cmd: Subcommand, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = config::parse_config(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(kind) = opts.estimator {
        cfg.estimator.kind = kind;
    }
    run_with_config(cmd, &cfg, &opts.out)
}

pub fn run_with_config(cmd: Subcommand, cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let normalized = cfg.normalized();
    let mut w = Writer::new(out)?;
    let seed = cfg.scenario.seed;

    let runs = match cmd {
        Subcommand::Simulate => {
            if cfg.scenario.measurements.is_some() {
                return Err(Error::InvalidInput(
                    "simulate cannot run with scenario.measurements set".into(),
                ));
            }
            let sim = config::simulate(cfg, seed)?;
            w.channels("truth.csv", &truth_file(cfg, &sim.system, &sim.truth)?)?;
            w.channels("measurements.csv", &measurement_file(&sim.system, &sim.measurements)?)?;
            Vec::new()
        }
        Subcommand::Estimate | Subcommand::Tune => {
            let data = load_data(cfg, seed)?;
            let spec = RunSpec {
                kind: cfg.estimator.kind,
                tuned: cmd == Subcommand::Tune,
            };
            let result = execute(cfg, &data.system, &data.measurements, spec)?;
            let run = write_result(&mut w, cfg, &data.system, &result)?;
            vec![run]
        }
        Subcommand::Compare => {
            let data = load_data(cfg, seed)?;
            let truth = data.truth.as_ref().ok_or_else(|| {
                Error::InvalidInput("compare needs simulated truth; remove scenario.measurements".into())
            })?;
            let mut runs = Vec::new();
            let mut traces = Vec::new();
            let mut covariance = String::from("estimator,series,final_over_median,max_over_median,bounded,growing\n");
            for label in &cfg.eval.runs {
                let spec = RunSpec::parse(label)?;
                let result = execute(cfg, &data.system, &data.measurements, spec)?;
                runs.push(write_result(&mut w, cfg, &data.system, &result)?);
                let diag = covariance_diagnostics(&result.trace, cfg.eval.skip);
                covariance_rows(&mut covariance, &result.trace.estimator, &cfg.input_names(), &diag);
                traces.push(result.trace);
            }
            let report = compare_report(&traces, truth, cfg.eval.skip)?;
            w.text("report.csv", &report.to_csv())?;
            w.text("report.txt", &report.to_table())?;
            w.text("covariance.csv", &covariance)?;
            runs
        }
    };

    w.text("config.toml", &normalized)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cmd.name().to_string(),
        config_sha256: sha256_hex(normalized.as_bytes()),
        seed,
        runs,
        artifacts: w.artifacts.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    io::write_atomic(out.join("manifest.json"), json.as_bytes())?;
    Ok(RunSummary {
        out_dir: out.to_path_buf(),
        manifest,
    })
}

/// Measurements, with truth when they were simulated.
pub struct RunData {
    pub system: StructuralSystem,
    pub measurements: MeasurementSet,
    pub truth: Option<TruthTrajectory>,
}

/// Simulates from the configuration, or reads `scenario.measurements`.
pub fn load_data(cfg: &RunConfig, seed: u64) -> Result<RunData> {
    match &cfg.scenario.measurements {
        None => {
            let Simulation {
                system,
                truth,
                measurements,
                ..
            } = config::simulate(cfg, seed)?;
            Ok(RunData {
                system,
                measurements,
                truth: Some(truth),
            })
        }
        Some(path) => {
            let system = cfg.system()?;
            let file = io::read_channel_file(cfg.resolve_path(path))?;
            if let Some(dt) = file.dt() {
                if (dt - cfg.model.dt).abs() > 1e-9 * cfg.model.dt {
                    return Err(Error::InvalidInput(format!(
                        "measurement file sampled at dt = {dt}, model uses {}",
                        cfg.model.dt
                    )));
                }
            }
            let values = file.select(&cfg.sensors.channels)?;
            let noise_std = match cfg.noise_spec() {
                NoiseSpec::Std(s) => broadcast(&s, values.ncols()),
                NoiseSpec::Snr(s) => {
                    let snr = broadcast(&s, values.ncols());
                    (0..values.ncols())
                        .map(|c| {
                            let col = values.column(c);
                            (col.norm_squared() / col.len().max(1) as f64).sqrt() / snr[c]
                        })
                        .collect()
                }
            };
            let mut measurements = MeasurementSet::clean(file.times, values, noise_std);
            measurements.seed = seed;
            Ok(RunData {
                system,
                measurements,
                truth: None,
            })
        }
    }
}

fn broadcast(v: &[f64], n: usize) -> Vec<f64> {
    if v.len() == 1 {
        vec![v[0]; n]
    } else {
        v.to_vec()
    }
}

/// Output of one estimator or filter-array run.
pub struct ExecResult {
    pub trace: EstimateTrace,
    pub hygiene: CovarianceHygiene,
    pub selections: Option<Vec<SelectionRecord>>,
    pub spec: RunSpec,
}

/// Runs one estimator, with the fixed `estimator.q` or as a filter array.
pub fn execute(cfg: &RunConfig, system: &StructuralSystem, data: &MeasurementSet, spec: RunSpec) -> Result<ExecResult> {
    let est = &cfg.estimator;
    let dss = system.dss.with_r(data.r_matrix())?.with_q_scalar(est.q)?;
    let n = dss.n_states();
    let tol = cfg.tolerances();
    let label = spec.label();
    let (trace, hygiene, selections) = if spec.tuned {
        let w = cfg.tuner.window;
        let out = match spec.kind {
            EstimatorKind::Uf => run_array(&mut uf_array(&dss, &cfg.candidate_grid()?, w, est.p0, tol)?, system, data, &label)?,
            EstimatorKind::Us => run_array(
                &mut us_array(&dss, est.window, &cfg.candidate_grid()?, w, est.p0, tol)?,
                system,
                data,
                &label,
            )?,
            EstimatorKind::Akf => {
                let (gx, gp) = cfg.akf_grids()?;
                run_array(&mut akf_array(&dss, &gx, &gp, w, est.p0)?, system, data, &label)?
            }
        };
        (out.trace, out.hygiene, Some(out.records))
    } else {
        let out = match spec.kind {
            EstimatorKind::Uf => {
                let mut f = UniversalFilter::new(dss, FilterState::initial(n, est.p0)).with_tolerances(tol);
                run_estimator(&mut f, system, data, &label)?
            }
            EstimatorKind::Us => {
                let mut s = UniversalSmoother::new(dss, est.window, est.p0)?.with_tolerances(tol);
                run_estimator(&mut s, system, data, &label)?
            }
            EstimatorKind::Akf => {
                let mut a = AugmentedKalmanFilter::new(dss, est.p0, est.q, est.q_input);
                run_estimator(&mut a, system, data, &label)?
            }
        };
        (out.trace, out.hygiene, None)
    };
    Ok(ExecResult {
        trace,
        hygiene,
        selections,
        spec,
    })
}

fn write_result(w: &mut Writer, cfg: &RunConfig, system: &StructuralSystem, r: &ExecResult) -> Result<ManifestRun> {
    let label = r.spec.label();
    w.channels(&format!("estimate_{label}.csv"), &estimate_file(cfg, system, &r.trace)?)?;
    let var = ChannelFile::new(cfg.input_names(), r.trace.times.clone(), r.trace.input_variances.clone())?;
    w.channels(&format!("input_variance_{label}.csv"), &var)?;
    if let Some(records) = &r.selections {
        w.text(&format!("selection_{label}.csv"), &selection_csv(records))?;
    }
    Ok(ManifestRun {
        name: label,
        latency_steps: r.trace.latency_steps,
        latency_seconds: r.trace.latency_steps as f64 * cfg.model.dt,
    })
}

fn floor_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|f| format!("{prefix}{f}")).collect()
}

fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Inputs, then displacement, velocity and acceleration of every floor.
fn response_file(
    cfg: &RunConfig,
    times: Vec<f64>,
    inputs: &DMatrix<f64>,
    disp: &DMatrix<f64>,
    vel: &DMatrix<f64>,
    acc: &DMatrix<f64>,
) -> Result<ChannelFile> {
    let n = cfg.n_floors();
    let mut names = cfg.input_names();
    for prefix in ["d", "v", "a"] {
        names.extend(floor_names(prefix, n));
    }
    ChannelFile::new(names, times, hstack(&[inputs, disp, vel, acc]))
}

pub fn truth_file(cfg: &RunConfig, _system: &StructuralSystem, truth: &TruthTrajectory) -> Result<ChannelFile> {
    response_file(
        cfg,
        truth.times.clone(),
        &truth.inputs,
        &truth.physical_disp,
        &truth.physical_vel,
        &truth.physical_acc,
    )
}

pub fn estimate_file(cfg: &RunConfig, _system: &StructuralSystem, trace: &EstimateTrace) -> Result<ChannelFile> {
    response_file(
        cfg,
        trace.times.clone(),
        &trace.input_estimates,
        &trace.physical_disp,
        &trace.physical_vel,
        &trace.physical_acc,
    )
}

pub fn measurement_file(system: &StructuralSystem, data: &MeasurementSet) -> Result<ChannelFile> {
    ChannelFile::new(system.layout.names(), data.times.clone(), data.values.clone())
}

/// `step,selected_q,selected_error`, with `selected_q_input` before the
/// error column for two-parameter grids.
pub fn selection_csv(records: &[SelectionRecord]) -> String {
    let two = records.iter().any(|r| r.selected_q_input.is_some());
    let mut out = String::from(if two {
        "step,selected_q,selected_q_input,selected_error\n"
    } else {
        "step,selected_q,selected_error\n"
    });
    for r in records {
        let _ = write!(out, "{},{}", r.step_index, format_value(r.selected_q));
        if two {
            let _ = write!(out, ",{}", format_value(r.selected_q_input.unwrap_or(f64::NAN)));
        }
        let _ = writeln!(out, ",{}", format_value(r.selected_error));
    }
    out
}

fn covariance_rows(out: &mut String, estimator: &str, inputs: &[String], report: &CovarianceReport) {
    let mut row = |series: &str, d: &VarianceDiagnostics| {
        let _ = writeln!(
            out,
            "{estimator},{series},{},{},{},{}",
            format_value(d.final_over_median),
            format_value(d.max_over_median),
            d.bounded,
            d.growing
        );
    };
    for (name, d) in inputs.iter().zip(&report.inputs) {
        row(name, d);
    }
    row("input_trace", &report.input_trace);
    row("state_trace", &report.state_trace);
}

/// The single line printed on failure: `error kind=<tag> message=<text>`.
pub fn error_line(e: &Error) -> String {
    format!("error kind={} message={}", e.kind(), e.to_string().replace('\n', " "))
}
