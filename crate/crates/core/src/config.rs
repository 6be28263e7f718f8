//! Run configuration.
//!
//! A single TOML file with the sections `model`, `scenario`, `sensors`,
//! `estimator`, `tuner` and `eval`. Unknown keys are rejected. After parsing,
//! every default is filled in so the normalized echo (see
//! [`RunConfig::normalized`]) fully describes the run.
//!
//! ```toml
//! [model]
//! masses = [8.083, 8.083, 8.083, 8.083, 8.083]
//! stiffnesses = [1.24e4, 1.24e4, 1.24e4, 1.24e4, 1.24e4]
//! damping_ratios = [0.016]
//! modes = 5
//! dt = 0.01
//!
//! [scenario]
//! kind = "multi_impact"
//! duration = 30.0
//! seed = 42
//! noise = { snr = [1000.0] }
//! taps = [{ floor = 2, start = 1.0, count = 5, interval = 1.0 }]
//!
//! [sensors]
//! channels = ["d2", "a4", "a5"]
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Tolerances;
use crate::io;
use crate::model::{build_shear_frame, Damping, InputDefinition, SensorLayout, StructuralSystem};
use crate::sim::{
    add_measurement_noise, generate_impulse_train, ground_motion_from_record, simulate_truth,
    simulate_with_process_noise, synthetic_ground_motion, GroundMotionParams, HalfSine, MeasurementSet,
    NoiseSpec, Scenario, TapSeries, TruthTrajectory,
};
use crate::tuner::{build_candidate_grid, CandidateGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub scenario: ScenarioSection,
    pub sensors: SensorsSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub tuner: TunerSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Floor masses (kg), bottom to top.
    pub masses: Vec<f64>,
    /// Storey stiffnesses (N/m); storey `i` sits below floor `i`.
    pub stiffnesses: Vec<f64>,
    /// One modal damping ratio for all modes, or one per retained mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub damping_ratios: Vec<f64>,
    /// Rayleigh coefficients `[alpha, beta]`, `C = alpha M + beta K`, in
    /// place of modal ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rayleigh: Option<[f64; 2]>,
    /// Retained modes; defaults to all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKindName {
    GroundMotion,
    MultiImpact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKindName,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    pub noise: NoiseSection,
    /// Scalar `q` of injected process noise `w ~ N(0, q I)`; zero for none.
    #[serde(default)]
    pub process_noise: f64,
    /// Recorded measurements to estimate from instead of simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<String>,
    /// Input floors (1-based), one per force column. Defaults to the tap
    /// floors in order of first appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_floors: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taps: Vec<TapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_motion: Option<GroundMotionSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSection {
    pub floor: usize,
    pub start: f64,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "unit_interval")]
    pub interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub width: f64,
    pub peak: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self { width: 0.04, peak: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundMotionSection {
    /// Channel file with a `t` column and an `ag1` column (m/s^2). When
    /// absent a synthetic record is generated from the parameters below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pga: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsSection {
    pub channels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Uf,
    Us,
    Akf,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Uf => "uf",
            EstimatorKind::Us => "us",
            EstimatorKind::Akf => "akf",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uf" => Ok(EstimatorKind::Uf),
            "us" => Ok(EstimatorKind::Us),
            "akf" => Ok(EstimatorKind::Akf),
            _ => Err(Error::InvalidParameter(format!("unknown estimator `{s}` (uf, us, akf)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_kind")]
    pub kind: EstimatorKind,
    /// Smoothing window `N` of the universal smoother.
    #[serde(default = "default_smoothing_window")]
    pub window: usize,
    /// Initial covariance `P0 = p0 I`.
    #[serde(default = "default_p0")]
    pub p0: f64,
    /// Fixed process-noise level `Q = q I` for `estimate`.
    #[serde(default = "default_q")]
    pub q: f64,
    /// Random-walk level of the augmented filter's input model.
    #[serde(default = "default_q_input")]
    pub q_input: f64,
    #[serde(default = "default_tol")]
    pub pinv_tolerance: f64,
    #[serde(default = "default_tol")]
    pub range_tolerance: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            window: default_smoothing_window(),
            p0: default_p0(),
            q: default_q(),
            q_input: default_q_input(),
            pinv_tolerance: default_tol(),
            range_tolerance: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerSection {
    #[serde(default = "default_q_min")]
    pub q_min: f64,
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    /// Grid spacing in decades.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Input random-walk axis of the augmented filter's two-parameter grid.
    #[serde(default = "default_q_input_min")]
    pub q_input_min: f64,
    #[serde(default = "default_q_input_max")]
    pub q_input_max: f64,
    /// Spacing of both axes of the augmented filter's two-parameter grid.
    #[serde(default = "default_akf_spacing")]
    pub akf_spacing: f64,
    /// Evaluation window `W`.
    #[serde(default = "default_eval_window")]
    pub window: usize,
}

impl Default for TunerSection {
    fn default() -> Self {
        Self {
            q_min: default_q_min(),
            q_max: default_q_max(),
            q_input_min: default_q_input_min(),
            q_input_max: default_q_input_max(),
            spacing: default_spacing(),
            akf_spacing: default_akf_spacing(),
            window: default_eval_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Transient excluded from scores (s).
    #[serde(default = "default_skip")]
    pub skip: f64,
    /// Runs for `compare`: `uf`, `us`, `akf`, or `tuned-` followed by one
    /// of those for the filter-array version.
    #[serde(default = "default_runs")]
    pub runs: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            skip: default_skip(),
            runs: default_runs(),
        }
    }
}

fn one() -> usize {
    1
}
fn unit_interval() -> f64 {
    1.0
}
fn default_kind() -> EstimatorKind {
    EstimatorKind::Uf
}
fn default_smoothing_window() -> usize {
    20
}
fn default_p0() -> f64 {
    1e-9
}
fn default_q() -> f64 {
    1e-10
}
fn default_q_input() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-10
}
fn default_q_min() -> f64 {
    1e-24
}
fn default_q_input_min() -> f64 {
    1e-18
}

fn default_q_input_max() -> f64 {
    1e9
}

fn default_q_max() -> f64 {
    1e3
}
fn default_spacing() -> f64 {
    0.01
}
fn default_akf_spacing() -> f64 {
    0.3
}
fn default_eval_window() -> usize {
    10
}
fn default_skip() -> f64 {
    0.0
}
fn default_runs() -> Vec<String> {
    vec!["uf".into(), "us".into()]
}

/// A compare entry: estimator and whether it runs as a filter array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub kind: EstimatorKind,
    pub tuned: bool,
}

impl RunSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (tuned, base) = match s.strip_prefix("tuned-") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        Ok(Self { kind: base.parse()?, tuned })
    }

    pub fn label(&self) -> String {
        if self.tuned {
            format!("tuned-{}", self.kind.name())
        } else {
            self.kind.name().to_string()
        }
    }
}

/// Reads, validates and normalizes a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, base)
}

/// Like [`parse_config`] for in-memory text; relative paths resolve
/// against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let path = match e.span() {
            Some(span) => key_path_at(text, span.start),
            None => "<root>".to_string(),
        };
        Error::config(path, message)
    })?;
    cfg.base_dir = base_dir.into();
    cfg.resolve()?;
    Ok(cfg)
}

/// Best-effort `section.key` location of a byte offset in TOML text.
fn key_path_at(text: &str, offset: usize) -> String {
    let offset = offset.min(text.len());
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[offset..].find('\n').map_or(text.len(), |i| offset + i);
    let mut section = String::new();
    for line in text[..line_start].lines() {
        let l = line.trim();
        if l.starts_with('[') {
            section = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    let line = &text[line_start..line_end];
    let key = line.split('=').next().unwrap_or("").trim();
    match (section.is_empty(), key.is_empty() || key.starts_with('[')) {
        (true, true) => "<root>".into(),
        (true, false) => key.into(),
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}

fn positive(value: f64, path: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be a positive number, got {value}")))
    }
}

impl RunConfig {
    pub fn n_floors(&self) -> usize {
        self.model.masses.len()
    }

    /// Fills defaults and checks cross-field consistency.
    fn resolve(&mut self) -> Result<()> {
        let n = self.model.masses.len();
        if n == 0 {
            return Err(Error::config("model.masses", "at least one floor is required"));
        }
        if self.model.stiffnesses.len() != n {
            return Err(Error::config(
                "model.stiffnesses",
                format!("expected {n} values (one per floor), got {}", self.model.stiffnesses.len()),
            ));
        }
        for (i, &m) in self.model.masses.iter().enumerate() {
            positive(m, &format!("model.masses[{i}]"))?;
        }
        for (i, &k) in self.model.stiffnesses.iter().enumerate() {
            positive(k, &format!("model.stiffnesses[{i}]"))?;
        }
        let modes = *self.model.modes.get_or_insert(n);
        if modes == 0 || modes > n {
            return Err(Error::config("model.modes", format!("must be in 1..={n}, got {modes}")));
        }
        let ratios = &self.model.damping_ratios;
        if let Some([alpha, beta]) = self.model.rayleigh {
            if !ratios.is_empty() {
                return Err(Error::config("model.rayleigh", "give either damping_ratios or rayleigh, not both"));
            }
            if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
                return Err(Error::config("model.rayleigh", "coefficients must be >= 0"));
            }
        } else if !(ratios.len() == 1 || ratios.len() == modes) {
            return Err(Error::config(
                "model.damping_ratios",
                format!("expected 1 or {modes} values, got {}", ratios.len()),
            ));
        }
        for (i, &z) in ratios.iter().enumerate() {
            if !(z >= 0.0 && z.is_finite()) {
                return Err(Error::config(format!("model.damping_ratios[{i}]"), "must be >= 0"));
            }
        }
        positive(self.model.dt, "model.dt")?;

        let sc = &mut self.scenario;
        positive(sc.duration, "scenario.duration")?;
        if !(sc.process_noise >= 0.0 && sc.process_noise.is_finite()) {
            return Err(Error::config("scenario.process_noise", "must be >= 0"));
        }
        match (&sc.noise.snr, &sc.noise.std) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::config("scenario.noise", "give exactly one of `snr` or `std`"))
            }
            (Some(v), None) => {
                for (i, &s) in v.iter().enumerate() {
                    positive(s, &format!("scenario.noise.snr[{i}]"))?;
                }
            }
            (None, Some(v)) => {
                for (i, &s) in v.iter().enumerate() {
                    if !(s >= 0.0 && s.is_finite()) {
                        return Err(Error::config(format!("scenario.noise.std[{i}]"), "must be >= 0"));
                    }
                }
            }
        }
        let q = self.sensors.channels.len();
        for (key, len) in [
            ("scenario.noise.snr", sc.noise.snr.as_ref().map(Vec::len)),
            ("scenario.noise.std", sc.noise.std.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != 1 && len != q {
                    return Err(Error::config(key, format!("expected 1 or {q} values, got {len}")));
                }
            }
        }

        match sc.kind {
            ScenarioKindName::MultiImpact => {
                if sc.ground_motion.is_some() {
                    return Err(Error::config(
                        "scenario.ground_motion",
                        "not allowed for kind = \"multi_impact\"",
                    ));
                }
                for (i, tap) in sc.taps.iter().enumerate() {
                    if tap.floor == 0 || tap.floor > n {
                        return Err(Error::config(
                            format!("scenario.taps[{i}].floor"),
                            format!("floor {} outside 1..={n}", tap.floor),
                        ));
                    }
                    if !(tap.start >= 0.0 && tap.start.is_finite()) {
                        return Err(Error::config(format!("scenario.taps[{i}].start"), "must be >= 0"));
                    }
                    if tap.count > 1 {
                        positive(tap.interval, &format!("scenario.taps[{i}].interval"))?;
                    }
                }
                if sc.input_floors.is_none() {
                    let mut floors: Vec<usize> = Vec::new();
                    for tap in &sc.taps {
                        if !floors.contains(&tap.floor) {
                            floors.push(tap.floor);
                        }
                    }
                    sc.input_floors = Some(floors);
                }
                let floors = sc.input_floors.as_ref().unwrap();
                if floors.is_empty() {
                    return Err(Error::config("scenario.input_floors", "at least one input floor is required"));
                }
                for (i, &f) in floors.iter().enumerate() {
                    if f == 0 || f > n {
                        return Err(Error::config(
                            format!("scenario.input_floors[{i}]"),
                            format!("floor {f} outside 1..={n}"),
                        ));
                    }
                    if floors[..i].contains(&f) {
                        return Err(Error::config(format!("scenario.input_floors[{i}]"), "duplicate floor"));
                    }
                }
                for (i, tap) in sc.taps.iter().enumerate() {
                    if !floors.contains(&tap.floor) {
                        return Err(Error::config(
                            format!("scenario.taps[{i}].floor"),
                            "tap floor is not listed in scenario.input_floors",
                        ));
                    }
                }
                let pulse = sc.pulse.get_or_insert_with(PulseSection::default);
                positive(pulse.width, "scenario.pulse.width")?;
                if !pulse.peak.is_finite() {
                    return Err(Error::config("scenario.pulse.peak", "must be finite"));
                }
                if pulse.width < 2.0 * self.model.dt {
                    return Err(Error::config("scenario.pulse.width", "must span at least two timesteps"));
                }
            }
            ScenarioKindName::GroundMotion => {
                if !sc.taps.is_empty() {
                    return Err(Error::config("scenario.taps", "not allowed for kind = \"ground_motion\""));
                }
                if sc.pulse.is_some() {
                    return Err(Error::config("scenario.pulse", "not allowed for kind = \"ground_motion\""));
                }
                if sc.input_floors.is_some() {
                    return Err(Error::config(
                        "scenario.input_floors",
                        "not allowed for kind = \"ground_motion\"",
                    ));
                }
                let defaults = GroundMotionParams::new(sc.duration, self.model.dt, sc.seed);
                let gm = sc.ground_motion.get_or_insert(GroundMotionSection {
                    file: None,
                    pga: None,
                    f_low: None,
                    f_high: None,
                    rise: None,
                    hold: None,
                    decay: None,
                });
                if gm.file.is_none() {
                    gm.pga.get_or_insert(defaults.pga);
                    gm.f_low.get_or_insert(defaults.f_low);
                    gm.f_high.get_or_insert(defaults.f_high);
                    gm.rise.get_or_insert(defaults.rise);
                    gm.hold.get_or_insert(defaults.hold);
                    gm.decay.get_or_insert(defaults.decay);
                    for (key, v) in [
                        ("pga", gm.pga),
                        ("f_low", gm.f_low),
                        ("f_high", gm.f_high),
                        ("decay", gm.decay),
                    ] {
                        positive(v.unwrap(), &format!("scenario.ground_motion.{key}"))?;
                    }
                    if gm.f_low.unwrap() >= gm.f_high.unwrap() {
                        return Err(Error::config("scenario.ground_motion.f_high", "must exceed f_low"));
                    }
                } else if gm.pga.is_some()
                    || gm.f_low.is_some()
                    || gm.f_high.is_some()
                    || gm.rise.is_some()
                    || gm.hold.is_some()
                    || gm.decay.is_some()
                {
                    return Err(Error::config(
                        "scenario.ground_motion",
                        "synthetic-record parameters cannot be combined with `file`",
                    ));
                }
            }
        }

        if self.sensors.channels.is_empty() {
            return Err(Error::config("sensors.channels", "at least one channel is required"));
        }
        let layout = SensorLayout::parse(&self.sensors.channels).map_err(|_| {
            let bad = self
                .sensors
                .channels
                .iter()
                .position(|c| c.parse::<crate::model::Channel>().is_err())
                .unwrap_or(0);
            Error::config(
                format!("sensors.channels[{bad}]"),
                format!("`{}` is not a d/v/a channel name", self.sensors.channels[bad]),
            )
        })?;
        for (i, c) in layout.channels.iter().enumerate() {
            if c.dof >= n {
                return Err(Error::config(
                    format!("sensors.channels[{i}]"),
                    format!("`{c}` refers to floor {} but the model has {n}", c.dof + 1),
                ));
            }
            if layout.channels[..i].contains(c) {
                return Err(Error::config(format!("sensors.channels[{i}]"), format!("duplicate channel `{c}`")));
            }
        }

        let est = &self.estimator;
        positive(est.p0, "estimator.p0")?;
        positive(est.q, "estimator.q")?;
        positive(est.q_input, "estimator.q_input")?;
        positive(est.pinv_tolerance, "estimator.pinv_tolerance")?;
        positive(est.range_tolerance, "estimator.range_tolerance")?;

        let t = &self.tuner;
        positive(t.q_min, "tuner.q_min")?;
        positive(t.q_max, "tuner.q_max")?;
        if t.q_max <= t.q_min {
            return Err(Error::config("tuner.q_max", "must exceed tuner.q_min"));
        }
        positive(t.q_input_min, "tuner.q_input_min")?;
        positive(t.q_input_max, "tuner.q_input_max")?;
        if t.q_input_max <= t.q_input_min {
            return Err(Error::config("tuner.q_input_max", "must exceed tuner.q_input_min"));
        }
        positive(t.spacing, "tuner.spacing")?;
        positive(t.akf_spacing, "tuner.akf_spacing")?;
        if t.window == 0 {
            return Err(Error::config("tuner.window", "must be >= 1"));
        }

        if !(self.eval.skip >= 0.0 && self.eval.skip.is_finite()) {
            return Err(Error::config("eval.skip", "must be >= 0"));
        }
        for (i, r) in self.eval.runs.iter().enumerate() {
            RunSpec::parse(r).map_err(|e| Error::config(format!("eval.runs[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// The configuration with all defaults written out. Parsing this text
    /// gives back an equal configuration.
    pub fn normalized(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            pinv: self.estimator.pinv_tolerance,
            range: self.estimator.range_tolerance,
        }
    }

    pub fn layout(&self) -> Result<SensorLayout> {
        SensorLayout::parse(&self.sensors.channels)
    }

    pub fn input_definition(&self) -> InputDefinition {
        match self.scenario.kind {
            ScenarioKindName::GroundMotion => InputDefinition::GroundMotion,
            ScenarioKindName::MultiImpact => InputDefinition::PointForces(
                self.scenario
                    .input_floors
                    .as_ref()
                    .expect("resolved")
                    .iter()
                    .map(|f| f - 1)
                    .collect(),
            ),
        }
    }

    /// Names of the input columns: `ag1` or `p<floor>`.
    pub fn input_names(&self) -> Vec<String> {
        match self.scenario.kind {
            ScenarioKindName::GroundMotion => vec!["ag1".into()],
            ScenarioKindName::MultiImpact => self
                .scenario
                .input_floors
                .as_ref()
                .expect("resolved")
                .iter()
                .map(|f| format!("p{f}"))
                .collect(),
        }
    }

    pub fn damping(&self) -> Damping {
        match self.model.rayleigh {
            Some([alpha, beta]) => Damping::Rayleigh { alpha, beta },
            None => Damping::ModalRatios(self.model.damping_ratios.clone()),
        }
    }

    /// Structure, reduction and sensors with `Q = estimator.q I` and an
    /// identity placeholder for `R`.
    pub fn system(&self) -> Result<StructuralSystem> {
        let structure = build_shear_frame(
            &self.model.masses,
            &self.model.stiffnesses,
            &self.damping(),
            &self.input_definition(),
        )?;
        let layout = self.layout()?;
        let q = layout.len();
        let modes = self.model.modes.expect("resolved");
        StructuralSystem::assemble(
            structure,
            modes,
            layout,
            self.model.dt,
            DMatrix::identity(2 * modes, 2 * modes) * self.estimator.q,
            DMatrix::identity(q, q),
        )
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let sc = &self.scenario;
        let dt = self.model.dt;
        match sc.kind {
            ScenarioKindName::MultiImpact => {
                let floors = sc.input_floors.as_ref().expect("resolved");
                let schedule: Vec<TapSeries> = sc
                    .taps
                    .iter()
                    .map(|t| TapSeries {
                        dof: t.floor - 1,
                        start: t.start,
                        count: t.count,
                        interval: t.interval,
                    })
                    .collect();
                let pulse = sc.pulse.clone().unwrap_or_default();
                let columns: Vec<usize> = floors.iter().map(|f| f - 1).collect();
                generate_impulse_train(
                    &schedule,
                    HalfSine { width: pulse.width, peak: pulse.peak },
                    &columns,
                    dt,
                    sc.duration,
                )
            }
            ScenarioKindName::GroundMotion => {
                let gm = sc.ground_motion.as_ref().expect("resolved");
                if let Some(file) = &gm.file {
                    let rec = io::read_channel_file(self.resolve_path(file))?;
                    let col = rec.select(&["ag1"])?;
                    let values: Vec<f64> = col.column(0).iter().copied().collect();
                    return ground_motion_from_record(&rec.times, &values, dt, sc.duration);
                }
                let mut p = GroundMotionParams::new(sc.duration, dt, sc.seed);
                p.pga = gm.pga.expect("resolved");
                p.f_low = gm.f_low.expect("resolved");
                p.f_high = gm.f_high.expect("resolved");
                p.rise = gm.rise.expect("resolved");
                p.hold = gm.hold.expect("resolved");
                p.decay = gm.decay.expect("resolved");
                synthetic_ground_motion(&p)
            }
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match (&self.scenario.noise.snr, &self.scenario.noise.std) {
            (Some(s), _) => NoiseSpec::Snr(s.clone()),
            (None, Some(s)) => NoiseSpec::Std(s.clone()),
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn candidate_grid(&self) -> Result<CandidateGrid> {
        build_candidate_grid(self.tuner.q_min, self.tuner.q_max, self.tuner.spacing)
    }

    /// State and input axes of the augmented filter's grid.
    pub fn akf_grids(&self) -> Result<(CandidateGrid, CandidateGrid)> {
        let t = &self.tuner;
        Ok((
            build_candidate_grid(t.q_min, t.q_max, t.akf_spacing)?,
            build_candidate_grid(t.q_input_min, t.q_input_max, t.akf_spacing)?,
        ))
    }
}

/// Everything `simulate` produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub system: StructuralSystem,
    pub scenario: Scenario,
    pub truth: TruthTrajectory,
    pub measurements: MeasurementSet,
}

/// Measurement-noise and process-noise seeds derived from the run seed. The
/// synthetic ground motion uses the run seed itself.
pub fn derived_seeds(seed: u64) -> (u64, u64) {
    (seed.wrapping_add(1), seed.wrapping_add(2))
}

/// Simulates truth and noisy measurements for `cfg` with the given seed.
pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<Simulation> {
    let mut cfg = cfg.clone();
    cfg.scenario.seed = seed;
    let system = cfg.system()?;
    let scenario = cfg.scenario()?;
    let x0 = DVector::zeros(system.n_states());
    let (noise_seed, process_seed) = derived_seeds(seed);
    let truth = if cfg.scenario.process_noise > 0.0 {
        let n = system.n_states();
        let cov = DMatrix::identity(n, n) * cfg.scenario.process_noise;
        simulate_with_process_noise(&system, &scenario, &x0, &cov, process_seed)?
    } else {
        simulate_truth(&system, &scenario, &x0)?
    };
    let clean = truth.clean_outputs(&system);
    let measurements = add_measurement_noise(truth.times.clone(), &clean, &cfg.noise_spec(), noise_seed)?;
    Ok(Simulation {
        system,
        scenario,
        truth,
        measurements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[model]
masses = [8.083, 8.083, 8.083, 8.083, 8.083]
stiffnesses = [1.24e4, 1.24e4, 1.24e4, 1.24e4, 1.24e4]
damping_ratios = [0.016]
dt = 0.01

[scenario]
kind = "multi_impact"
duration = 2.0
noise = { snr = [100.0] }
taps = [{ floor = 2, start = 0.5 }]

[sensors]
channels = ["d2", "a4", "a5"]
"#;

    #[test]
    fn defaults_are_filled() {
        let cfg = parse_config_str(MINIMAL, ".").unwrap();
        assert_eq!(cfg.estimator.window, 20);
        assert_eq!(cfg.tuner.window, 10);
        assert_eq!(cfg.estimator.p0, 1e-9);
        assert_eq!(cfg.estimator.pinv_tolerance, 1e-10);
        assert_eq!(cfg.model.modes, Some(5));
        assert_eq!(cfg.scenario.input_floors, Some(vec![2]));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replace("dt = 0.01", "dt = 0.01\npinv_tol = 1e-3");
        match parse_config_str(&text, ".").unwrap_err() {
            Error::Config { path, message } => {
                assert_eq!(path, "model.pinv_tol");
                assert!(message.contains("pinv_tol"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn out_of_range_channel_names_its_key() {
        let text = MINIMAL.replace("\"a5\"]", "\"d9\"]");
        match parse_config_str(&text, ".").unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "sensors.channels[2]"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn normalized_is_a_fixed_point() {
        let cfg = parse_config_str(MINIMAL, ".").unwrap();
        let once = cfg.normalized();
        let again = parse_config_str(&once, ".").unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.normalized(), once);
    }

    #[test]
    fn rayleigh_damping_replaces_ratios() {
        let text = MINIMAL.replace("damping_ratios = [0.016]", "rayleigh = [0.1, 1e-4]");
        let cfg = parse_config_str(&text, ".").unwrap();
        assert_eq!(cfg.damping(), Damping::Rayleigh { alpha: 0.1, beta: 1e-4 });
        assert!(cfg.system().is_ok());
        let both = MINIMAL.replace("damping_ratios = [0.016]", "damping_ratios = [0.016]\nrayleigh = [0.1, 1e-4]");
        assert!(parse_config_str(&both, ".").is_err());
        let neither = MINIMAL.replace("damping_ratios = [0.016]\n", "");
        assert!(parse_config_str(&neither, ".").is_err());
    }

    #[test]
    fn one_scenario_kind_only() {
        let text = MINIMAL.replace("[sensors]", "ground_motion = { pga = 1.0 }\n\n[sensors]");
        assert!(parse_config_str(&text, ".").is_err());
    }
}
