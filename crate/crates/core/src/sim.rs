//! Ground-truth trajectories and synthetic measurements.
//!
//! Truth propagation uses the exact zero-order-hold map of the discrete
//! model, so the only mismatch an estimator sees is whatever the caller
//! introduces (noise, reduced order, wrong Q).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{StructuralModel, StructuralSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    GroundMotion,
    MultiImpact,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// `T x l`, row `k` holds `p_k` at `t_k = k dt`.
    pub input_series: DMatrix<f64>,
    pub dt: f64,
    pub duration: f64,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.input_series.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.input_series.nrows() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Number of samples `ceil(duration / dt) + 1`, forgiving representation
/// error when `duration` is a multiple of `dt`.
pub fn sample_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and duration >= 0, got dt = {dt}, duration = {duration}"
        )));
    }
    let ratio = duration / dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.ceil()
    };
    Ok(steps as usize + 1)
}

/// A run of equally spaced taps on one DOF (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapSeries {
    pub dof: usize,
    pub start: f64,
    pub count: usize,
    pub interval: f64,
}

/// Half-sine impact pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSine {
    pub width: f64,
    pub peak: f64,
}

/// Samples a schedule of half-sine taps onto the time grid.
///
/// `columns` lists the DOF driven by each input column; every tap must
/// target one of them.
pub fn generate_impulse_train(
    schedule: &[TapSeries],
    pulse: HalfSine,
    columns: &[usize],
    dt: f64,
    duration: f64,
) -> Result<Scenario> {
    let t_len = sample_count(duration, dt)?;
    if !(pulse.width >= 2.0 * dt) {
        return Err(Error::InvalidParameter(format!(
            "pulse width {} must be at least two timesteps ({})",
            pulse.width,
            2.0 * dt
        )));
    }
    let mut starts: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for series in schedule {
        let col = columns.iter().position(|&d| d == series.dof).ok_or_else(|| {
            Error::InvalidSchedule(format!("tap DOF {} is not an input column", series.dof))
        })?;
        if series.count > 1 && !(series.interval > 0.0) {
            return Err(Error::InvalidSchedule("tap interval must be positive".into()));
        }
        for i in 0..series.count {
            starts[col].push(series.start + i as f64 * series.interval);
        }
    }

    let eps = 1e-9 * dt;
    let mut input = DMatrix::zeros(t_len, columns.len());
    for (col, col_starts) in starts.iter_mut().enumerate() {
        col_starts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        for pair in col_starts.windows(2) {
            if pair[1] < pair[0] + pulse.width - eps {
                return Err(Error::InvalidSchedule(format!(
                    "pulses at {} s and {} s overlap on input column {col}",
                    pair[0], pair[1]
                )));
            }
        }
        for &start in col_starts.iter() {
            let first = ((start - eps) / dt).ceil().max(0.0) as usize;
            let mut k = first;
            while k < t_len {
                let tau = k as f64 * dt - start;
                if tau > pulse.width + eps {
                    break;
                }
                if tau >= -eps {
                    let phase = tau / pulse.width;
                    if phase > 0.0 && phase < 1.0 {
                        input[(k, col)] = pulse.peak * (std::f64::consts::PI * phase).sin();
                    }
                }
                k += 1;
            }
        }
    }
    Ok(Scenario {
        kind: ScenarioKind::MultiImpact,
        input_series: input,
        dt,
        duration,
    })
}

/// Parameters of the band-limited stochastic ground motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundMotionParams {
    pub duration: f64,
    pub dt: f64,
    /// Peak absolute ground acceleration after scaling (m/s^2).
    pub pga: f64,
    /// High-pass corner (Hz).
    pub f_low: f64,
    /// Low-pass corner (Hz).
    pub f_high: f64,
    /// Envelope rise end and decay start (s); decay rate 1/s.
    pub rise: f64,
    pub hold: f64,
    pub decay: f64,
    pub seed: u64,
}

impl GroundMotionParams {
    pub fn new(duration: f64, dt: f64, seed: u64) -> Self {
        Self {
            duration,
            dt,
            pga: 1.0,
            f_low: 0.3,
            f_high: 12.0,
            rise: 0.1 * duration,
            hold: 0.5 * duration,
            decay: 0.3,
            seed,
        }
    }
}

/// Second-order section in direct form I.
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn lowpass(f0: f64, fs: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self::normalized([(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0], [a0, -2.0 * cos, 1.0 - alpha])
    }

    fn highpass(f0: f64, fs: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self::normalized(
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
            [a0, -2.0 * cos, 1.0 - alpha],
        )
    }

    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

/// Filtered, enveloped white noise scaled to the requested peak. Stands in
/// for recorded earthquake accelerograms.
pub fn synthetic_ground_motion(p: &GroundMotionParams) -> Result<Scenario> {
    let t_len = sample_count(p.duration, p.dt)?;
    let fs = 1.0 / p.dt;
    if !(p.f_low > 0.0 && p.f_low < p.f_high && p.f_high < 0.5 * fs) {
        return Err(Error::InvalidParameter(format!(
            "corner frequencies must satisfy 0 < f_low < f_high < fs/2 (got {}, {}, fs = {fs})",
            p.f_low, p.f_high
        )));
    }
    if !(p.pga >= 0.0) {
        return Err(Error::InvalidParameter("pga must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut hp = Biquad::highpass(p.f_low, fs);
    let mut lp = Biquad::lowpass(p.f_high, fs);
    let mut series: Vec<f64> = (0..t_len)
        .map(|k| {
            let t = k as f64 * p.dt;
            let env = if t < p.rise {
                (t / p.rise).powi(2)
            } else if t <= p.hold {
                1.0
            } else {
                (-p.decay * (t - p.hold)).exp()
            };
            let white: f64 = StandardNormal.sample(&mut rng);
            env * lp.process(hp.process(white))
        })
        .collect();
    if let Some(first) = series.first_mut() {
        *first = 0.0;
    }
    let peak = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let s = p.pga / peak;
        series.iter_mut().for_each(|v| *v *= s);
    }
    Ok(Scenario {
        kind: ScenarioKind::GroundMotion,
        input_series: DMatrix::from_column_slice(t_len, 1, &series),
        dt: p.dt,
        duration: p.duration,
    })
}

/// Linear interpolation of a recorded `(t, ag)` series onto the model grid.
/// Outside the record the motion is zero.
pub fn ground_motion_from_record(times: &[f64], values: &[f64], dt: f64, duration: f64) -> Result<Scenario> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidInput("ground-motion record is empty or ragged".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("ground-motion times must increase".into()));
    }
    let t_len = sample_count(duration, dt)?;
    let mut out = DMatrix::zeros(t_len, 1);
    let mut j = 0;
    for k in 0..t_len {
        let t = k as f64 * dt;
        if t < times[0] || t > *times.last().unwrap() {
            continue;
        }
        while j + 1 < times.len() && times[j + 1] < t {
            j += 1;
        }
        out[(k, 0)] = if j + 1 < times.len() {
            let w = (t - times[j]) / (times[j + 1] - times[j]);
            values[j] + w.clamp(0.0, 1.0) * (values[j + 1] - values[j])
        } else {
            values[j]
        };
    }
    Ok(Scenario {
        kind: ScenarioKind::GroundMotion,
        input_series: out,
        dt,
        duration,
    })
}

#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub times: Vec<f64>,
    /// `T x 2n_r` modal displacement and velocity.
    pub states: DMatrix<f64>,
    pub physical_disp: DMatrix<f64>,
    pub physical_vel: DMatrix<f64>,
    pub physical_acc: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
}

impl TruthTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    /// Noise-free outputs `C x_k + D p_k`, `T x q`.
    pub fn clean_outputs(&self, system: &StructuralSystem) -> DMatrix<f64> {
        let dss = &system.dss;
        let mut y = DMatrix::zeros(self.len(), dss.n_outputs());
        for k in 0..self.len() {
            let x = self.states.row(k).transpose();
            let p = self.inputs.row(k).transpose();
            let row = dss.c() * x + dss.d() * p;
            y.row_mut(k).copy_from(&row.transpose());
        }
        y
    }
}

/// Noise-free propagation `x_k = A x_{k-1} + B p_k` from `x_0 = x0`.
pub fn simulate_truth(system: &StructuralSystem, scenario: &Scenario, x0: &DVector<f64>) -> Result<TruthTrajectory> {
    propagate(system, scenario, x0, None)
}

/// Like [`simulate_truth`] but with additive process noise `w ~ N(0, Q)`
/// drawn from `process_cov` with a seeded generator.
pub fn simulate_with_process_noise(
    system: &StructuralSystem,
    scenario: &Scenario,
    x0: &DVector<f64>,
    process_cov: &DMatrix<f64>,
    seed: u64,
) -> Result<TruthTrajectory> {
    propagate(system, scenario, x0, Some((process_cov, seed)))
}

fn propagate(
    system: &StructuralSystem,
    scenario: &Scenario,
    x0: &DVector<f64>,
    noise: Option<(&DMatrix<f64>, u64)>,
) -> Result<TruthTrajectory> {
    let dss = &system.dss;
    let n = dss.n_states();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    if scenario.input_series.ncols() != dss.n_inputs() {
        return Err(Error::Dimension(format!(
            "scenario has {} inputs, model expects {}",
            scenario.input_series.ncols(),
            dss.n_inputs()
        )));
    }
    if (scenario.dt - dss.dt()).abs() > 1e-12 * dss.dt() {
        return Err(Error::Dimension(format!(
            "scenario dt {} differs from model dt {}",
            scenario.dt,
            dss.dt()
        )));
    }
    let mut sampler = match noise {
        Some((cov, seed)) => Some((covariance_factor(cov)?, ChaCha8Rng::seed_from_u64(seed))),
        None => None,
    };

    let t_len = scenario.len();
    let n_s = system.structure.n_dof;
    let mut states = DMatrix::zeros(t_len, n);
    let mut disp = DMatrix::zeros(t_len, n_s);
    let mut vel = DMatrix::zeros(t_len, n_s);
    let mut acc = DMatrix::zeros(t_len, n_s);
    let accel = AccelerationMap::new(&system.structure)?;
    let mut x = x0.clone();
    for k in 0..t_len {
        let p = scenario.input_series.row(k).transpose();
        if k > 0 {
            x = dss.a() * &x + dss.b() * &p;
            if let Some((factor, rng)) = sampler.as_mut() {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
                x += &*factor * z;
            }
        }
        states.row_mut(k).copy_from(&x.transpose());
        let (u, v) = system.physical_from_state(&x);
        let a = accel.apply(&u, &v, &p);
        disp.row_mut(k).copy_from(&u.transpose());
        vel.row_mut(k).copy_from(&v.transpose());
        acc.row_mut(k).copy_from(&a.transpose());
    }
    Ok(TruthTrajectory {
        times: scenario.times(),
        states,
        physical_disp: disp,
        physical_vel: vel,
        physical_acc: acc,
        inputs: scenario.input_series.clone(),
    })
}

/// Square-root factor `L` with `L L^T = cov` for a PSD covariance.
pub(crate) fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = nalgebra::SymmetricEigen::new(linalg::symmetrize(cov));
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::InvalidParameter("noise covariance is not PSD".into()));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// `u'' = M^{-1} (S p - C u' - K u)` with the mass factorization cached.
pub struct AccelerationMap<'a> {
    model: &'a StructuralModel,
    mass_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> AccelerationMap<'a> {
    pub fn new(model: &'a StructuralModel) -> Result<Self> {
        let mass_chol = model
            .mass_matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("mass matrix Cholesky factorization".into()))?;
        Ok(Self { model, mass_chol })
    }

    pub fn apply(&self, disp: &DVector<f64>, vel: &DVector<f64>, input: &DVector<f64>) -> DVector<f64> {
        let m = self.model;
        let rhs = &m.input_distribution * input - &m.damping_matrix * vel - &m.stiffness_matrix * disp;
        self.mass_chol.solve(&rhs)
    }
}

/// Physical accelerations from displacement, velocity and input via the
/// equation of motion. Purely algebraic.
pub fn reconstruct_acceleration(
    model: &StructuralModel,
    disp: &DVector<f64>,
    vel: &DVector<f64>,
    input: &DVector<f64>,
) -> Result<DVector<f64>> {
    if disp.len() != model.n_dof || vel.len() != model.n_dof || input.len() != model.n_inputs {
        return Err(Error::Dimension("displacement/velocity/input sizes".into()));
    }
    Ok(AccelerationMap::new(model)?.apply(disp, vel, input))
}

/// Per-channel noise level.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Standard deviation `RMS(clean channel) / snr`; one value or one per channel.
    Snr(Vec<f64>),
    /// Explicit standard deviations; one value or one per channel.
    Std(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub times: Vec<f64>,
    /// `T x q` in channel order.
    pub values: DMatrix<f64>,
    pub noise_std: Vec<f64>,
    pub seed: u64,
}

impl MeasurementSet {
    /// Noise-free set with the given nominal noise levels recorded.
    pub fn clean(times: Vec<f64>, values: DMatrix<f64>, noise_std: Vec<f64>) -> Self {
        Self {
            times,
            values,
            noise_std,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        self.values.row(k).transpose()
    }

    /// `diag(std^2)`, the measurement covariance handed to estimators.
    pub fn r_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.noise_std.len(),
            self.noise_std.iter().map(|s| s * s),
        ))
    }
}

fn per_channel(values: &[f64], q: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; q]),
        len if len == q => Ok(values.to_vec()),
        len => Err(Error::InvalidParameter(format!(
            "{what}: expected 1 or {q} values, got {len}"
        ))),
    }
}

/// Adds independent zero-mean Gaussian noise to each channel.
pub fn add_measurement_noise(
    times: Vec<f64>,
    clean_outputs: &DMatrix<f64>,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<MeasurementSet> {
    let (t_len, q) = clean_outputs.shape();
    if times.len() != t_len {
        return Err(Error::Dimension("times and outputs differ in length".into()));
    }
    let std = match noise {
        NoiseSpec::Std(s) => {
            let s = per_channel(s, q, "noise std")?;
            if s.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParameter("noise std must be >= 0".into()));
            }
            s
        }
        NoiseSpec::Snr(snr) => {
            let snr = per_channel(snr, q, "SNR")?;
            let mut out = Vec::with_capacity(q);
            for (c, &s) in snr.iter().enumerate() {
                if !(s > 0.0) {
                    return Err(Error::InvalidParameter("SNR must be positive".into()));
                }
                let col = clean_outputs.column(c);
                let rms = (col.norm_squared() / t_len.max(1) as f64).sqrt();
                if rms == 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "channel {c} is identically zero; SNR is undefined, give an explicit std"
                    )));
                }
                out.push(rms / s);
            }
            out
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = clean_outputs.clone();
    for k in 0..t_len {
        for (c, &s) in std.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[(k, c)] += s * z;
        }
    }
    Ok(MeasurementSet {
        times,
        values,
        noise_std: std,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_rule() {
        assert_eq!(sample_count(30.0, 0.01).unwrap(), 3001);
        assert_eq!(sample_count(0.025, 0.01).unwrap(), 4);
        assert_eq!(sample_count(0.0, 0.01).unwrap(), 1);
    }

    #[test]
    fn empty_schedule_is_silent() {
        let s = generate_impulse_train(&[], HalfSine { width: 0.04, peak: 1.0 }, &[1, 4, 3], 0.01, 2.0).unwrap();
        assert_eq!(s.input_series.shape(), (201, 3));
        assert!(s.input_series.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_pulse_sum() {
        let s = generate_impulse_train(
            &[TapSeries { dof: 0, start: 0.5, count: 1, interval: 1.0 }],
            HalfSine { width: 0.04, peak: 10.0 },
            &[0],
            0.01,
            1.0,
        )
        .unwrap();
        let expected: f64 = (1..4)
            .map(|i| 10.0 * (std::f64::consts::PI * (i as f64 * 0.01) / 0.04).sin())
            .sum();
        let total: f64 = s.input_series.column(0).iter().sum();
        assert!((total - expected).abs() < 1e-12);
        assert_eq!(s.input_series.column(0).iter().filter(|v| **v != 0.0).count(), 3);
    }

    #[test]
    fn overlapping_pulses_are_rejected() {
        let err = generate_impulse_train(
            &[TapSeries { dof: 0, start: 0.5, count: 2, interval: 0.02 }],
            HalfSine { width: 0.04, peak: 1.0 },
            &[0],
            0.01,
            1.0,
        );
        assert!(matches!(err, Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn narrow_pulse_is_rejected() {
        let err = generate_impulse_train(&[], HalfSine { width: 0.015, peak: 1.0 }, &[0], 0.01, 1.0);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_std_leaves_outputs_untouched() {
        let clean = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let m = add_measurement_noise((0..10).map(|k| k as f64).collect(), &clean, &NoiseSpec::Std(vec![0.0]), 1).unwrap();
        assert_eq!(m.values, clean);
    }

    #[test]
    fn snr_on_zero_channel_is_an_error() {
        let clean = DMatrix::zeros(10, 1);
        let r = add_measurement_noise(vec![0.0; 10], &clean, &NoiseSpec::Snr(vec![10.0]), 1);
        assert!(r.is_err());
    }

    #[test]
    fn record_interpolation() {
        let s = ground_motion_from_record(&[0.0, 1.0], &[0.0, 2.0], 0.25, 1.5).unwrap();
        let v: Vec<f64> = s.input_series.column(0).iter().copied().collect();
        assert_eq!(v, vec![0.0, 0.5, 1.0, 1.5, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn synthetic_motion_hits_requested_peak() {
        let mut p = GroundMotionParams::new(10.0, 0.01, 3);
        p.pga = 2.5;
        let s = synthetic_ground_motion(&p).unwrap();
        let peak = s.input_series.amax();
        assert!((peak - 2.5).abs() < 1e-12);
        assert_eq!(s.input_series[(0, 0)], 0.0);
    }
}
