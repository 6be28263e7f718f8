//! Scoring estimate traces against simulated truth.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::StepResult;
use crate::model::StructuralSystem;
use crate::sim::{AccelerationMap, TruthTrajectory};

/// Per-step record of one estimator run.
///
/// Row `i` holds the estimate for measurement sample `sample_indices[i]`,
/// stamped with that sample's time. Smoothed estimates are stamped with
/// their own time even though they need data up to `latency_steps` later.
#[derive(Debug, Clone)]
pub struct EstimateTrace {
    pub estimator: String,
    pub times: Vec<f64>,
    pub sample_indices: Vec<usize>,
    pub input_estimates: DMatrix<f64>,
    pub state_estimates: DMatrix<f64>,
    pub physical_disp: DMatrix<f64>,
    pub physical_vel: DMatrix<f64>,
    pub physical_acc: DMatrix<f64>,
    /// Diagonal of the input-estimate covariance.
    pub input_variances: DMatrix<f64>,
    pub state_cov_trace: Vec<f64>,
    /// Winning noise hypothesis per step (one or two values per row).
    pub selected_q: Option<Vec<Vec<f64>>>,
    pub latency_steps: usize,
}

impl EstimateTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Accumulates step results into an [`EstimateTrace`], reconstructing
/// physical responses through the modal basis and the equation of motion.
pub struct TraceBuilder<'a> {
    system: &'a StructuralSystem,
    accel: AccelerationMap<'a>,
    estimator: String,
    latency_steps: usize,
    times: Vec<f64>,
    indices: Vec<usize>,
    inputs: Vec<DVector<f64>>,
    states: Vec<DVector<f64>>,
    disp: Vec<DVector<f64>>,
    vel: Vec<DVector<f64>>,
    acc: Vec<DVector<f64>>,
    variances: Vec<DVector<f64>>,
    cov_trace: Vec<f64>,
    selected: Vec<Vec<f64>>,
}

impl<'a> TraceBuilder<'a> {
    pub fn new(system: &'a StructuralSystem, estimator: impl Into<String>, latency_steps: usize) -> Result<Self> {
        Ok(Self {
            system,
            accel: AccelerationMap::new(&system.structure)?,
            estimator: estimator.into(),
            latency_steps,
            times: Vec::new(),
            indices: Vec::new(),
            inputs: Vec::new(),
            states: Vec::new(),
            disp: Vec::new(),
            vel: Vec::new(),
            acc: Vec::new(),
            variances: Vec::new(),
            cov_trace: Vec::new(),
            selected: Vec::new(),
        })
    }

    pub fn push(&mut self, index: usize, time: f64, step: &StepResult) {
        let (u, v) = self.system.physical_from_state(&step.posterior_state);
        let a = self.accel.apply(&u, &v, &step.input_estimate);
        self.times.push(time);
        self.indices.push(index);
        self.inputs.push(step.input_estimate.clone());
        self.states.push(step.posterior_state.clone());
        self.disp.push(u);
        self.vel.push(v);
        self.acc.push(a);
        self.variances.push(step.input_covariance.diagonal());
        self.cov_trace.push(step.posterior_covariance.trace());
    }

    pub fn push_selected(&mut self, key: Vec<f64>) {
        self.selected.push(key);
    }

    pub fn finish(self) -> EstimateTrace {
        let system = self.system;
        let rows = |v: &[DVector<f64>], cols: usize| {
            let mut m = DMatrix::zeros(v.len(), cols);
            for (i, r) in v.iter().enumerate() {
                m.row_mut(i).copy_from(&r.transpose());
            }
            m
        };
        let n_s = system.structure.n_dof;
        let l = system.dss.n_inputs();
        let n = system.dss.n_states();
        EstimateTrace {
            estimator: self.estimator,
            input_estimates: rows(&self.inputs, l),
            state_estimates: rows(&self.states, n),
            physical_disp: rows(&self.disp, n_s),
            physical_vel: rows(&self.vel, n_s),
            physical_acc: rows(&self.acc, n_s),
            input_variances: rows(&self.variances, l),
            state_cov_trace: self.cov_trace,
            selected_q: if self.selected.is_empty() { None } else { Some(self.selected) },
            times: self.times,
            sample_indices: self.indices,
            latency_steps: self.latency_steps,
        }
    }
}

/// How per-step errors are combined over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Average over the scored steps.
    #[default]
    Mean,
    /// Plain sum over the scored steps.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    /// Mean absolute range-normalized error of each channel.
    pub per_channel: Vec<f64>,
}

/// Peak-to-peak range of every column.
pub fn channel_ranges(truth: &DMatrix<f64>) -> Vec<f64> {
    truth
        .column_iter()
        .map(|c| c.max() - c.min())
        .collect()
}

/// NRMSE with ranges taken from `truth` itself and mean aggregation over the
/// rows whose time is at least `skip`.
pub fn nrmse(estimates: &DMatrix<f64>, truth: &DMatrix<f64>, times: &[f64], skip: f64) -> Result<Nrmse> {
    nrmse_with(estimates, truth, &channel_ranges(truth), times, skip, Aggregation::Mean)
}

/// Per step, the error of every channel is divided by that channel's range
/// and the RMS is taken across channels; the per-step values are then
/// aggregated over time.
pub fn nrmse_with(
    estimates: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    ranges: &[f64],
    times: &[f64],
    skip: f64,
    aggregation: Aggregation,
) -> Result<Nrmse> {
    if estimates.shape() != truth.shape() {
        return Err(Error::InvalidInput(format!(
            "estimate shape {:?} differs from truth shape {:?}",
            estimates.shape(),
            truth.shape()
        )));
    }
    let (t_len, c) = truth.shape();
    if times.len() != t_len || ranges.len() != c {
        return Err(Error::InvalidInput("times or ranges do not match the series".into()));
    }
    if c == 0 {
        return Err(Error::InvalidInput("no channels to score".into()));
    }
    if let Some(j) = ranges.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput(format!("truth channel {j} has zero range")));
    }
    let mut total = 0.0;
    let mut per_channel = vec![0.0; c];
    let mut count = 0usize;
    for i in 0..t_len {
        if times[i] < skip - 1e-9 {
            continue;
        }
        let mut sq = 0.0;
        for j in 0..c {
            let e = (estimates[(i, j)] - truth[(i, j)]) / ranges[j];
            sq += e * e;
            per_channel[j] += e.abs();
        }
        total += (sq / c as f64).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!("no samples at or after skip = {skip} s")));
    }
    let scale = match aggregation {
        Aggregation::Mean => 1.0 / count as f64,
        Aggregation::Sum => 1.0,
    };
    for v in per_channel.iter_mut() {
        *v *= scale;
    }
    Ok(Nrmse {
        value: total * scale,
        per_channel,
    })
}

/// Scored quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    Input,
    Displacement,
    Velocity,
    Acceleration,
    State,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::Input,
        Quantity::Displacement,
        Quantity::Velocity,
        Quantity::Acceleration,
        Quantity::State,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Input => "input",
            Quantity::Displacement => "displacement",
            Quantity::Velocity => "velocity",
            Quantity::Acceleration => "acceleration",
            Quantity::State => "state",
        }
    }

    fn channel_name(self, j: usize) -> String {
        match self {
            Quantity::Input => format!("p{}", j + 1),
            Quantity::Displacement => format!("d{}", j + 1),
            Quantity::Velocity => format!("v{}", j + 1),
            Quantity::Acceleration => format!("a{}", j + 1),
            Quantity::State => format!("x{}", j + 1),
        }
    }

    fn of_trace(self, t: &EstimateTrace) -> &DMatrix<f64> {
        match self {
            Quantity::Input => &t.input_estimates,
            Quantity::Displacement => &t.physical_disp,
            Quantity::Velocity => &t.physical_vel,
            Quantity::Acceleration => &t.physical_acc,
            Quantity::State => &t.state_estimates,
        }
    }

    fn of_truth(self, t: &TruthTrajectory) -> &DMatrix<f64> {
        match self {
            Quantity::Input => &t.inputs,
            Quantity::Displacement => &t.physical_disp,
            Quantity::Velocity => &t.physical_vel,
            Quantity::Acceleration => &t.physical_acc,
            Quantity::State => &t.states,
        }
    }
}

/// Truth rows matching the trace's sample indices. Fails when the trace's
/// time stamps do not sit on the truth grid.
fn aligned_truth(trace: &EstimateTrace, truth: &TruthTrajectory, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dt = if truth.times.len() > 1 { truth.times[1] - truth.times[0] } else { 1.0 };
    let mut out = DMatrix::zeros(trace.len(), m.ncols());
    for (i, (&k, &t)) in trace.sample_indices.iter().zip(&trace.times).enumerate() {
        if k >= truth.len() || (truth.times[k] - t).abs() > 1e-9 * dt.abs().max(1e-300) {
            return Err(Error::InvalidInput(format!(
                "trace '{}' row {i} (t = {t}) is not on the truth grid",
                trace.estimator
            )));
        }
        out.row_mut(i).copy_from(&m.row(k));
    }
    Ok(out)
}

/// NRMSE of one quantity of a trace; ranges come from the full truth series.
pub fn score_quantity(trace: &EstimateTrace, truth: &TruthTrajectory, quantity: Quantity, skip: f64) -> Result<Nrmse> {
    let full = quantity.of_truth(truth);
    let aligned = aligned_truth(trace, truth, full)?;
    nrmse_with(
        quantity.of_trace(trace),
        &aligned,
        &channel_ranges(full),
        &trace.times,
        skip,
        Aggregation::Mean,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub estimator: String,
    pub quantity: Quantity,
    /// Channel name, or `all` for the aggregate.
    pub channel: String,
    pub nrmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedQSummary {
    pub estimator: String,
    /// Median of `log10` of each noise parameter over the run.
    pub median_log10: Vec<f64>,
    pub distinct_values: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub transient_skip: f64,
    pub rows: Vec<ScoreRow>,
    pub selected_q: Vec<SelectedQSummary>,
}

impl ScoreReport {
    pub fn overall(&self, estimator: &str, quantity: Quantity) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.quantity == quantity && r.channel == "all")
            .map(|r| r.nrmse)
    }

    /// CSV with header `estimator,quantity,channel,nrmse`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,quantity,channel,nrmse\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.16e}", r.estimator, r.quantity.name(), r.channel, r.nrmse);
        }
        out
    }

    /// Overall NRMSE per estimator and quantity as an aligned text table.
    pub fn to_table(&self) -> String {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.estimator.as_str()) {
                names.push(&r.estimator);
            }
        }
        let quantities: Vec<Quantity> = Quantity::ALL
            .iter()
            .copied()
            .filter(|q| self.rows.iter().any(|r| r.quantity == *q))
            .collect();
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max("estimator".len());
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "estimator");
        for q in &quantities {
            let _ = write!(out, "  {:>12}", q.name());
        }
        out.push('\n');
        for name in &names {
            let _ = write!(out, "{:<width$}", name);
            for q in &quantities {
                match self.overall(name, *q) {
                    Some(v) => {
                        let _ = write!(out, "  {:>12.6}", v);
                    }
                    None => {
                        let _ = write!(out, "  {:>12}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "transient skip: {} s", self.transient_skip);
        for s in &self.selected_q {
            let med: Vec<String> = s.median_log10.iter().map(|v| format!("{v:.2}")).collect();
            let _ = writeln!(
                out,
                "{}: median log10(Q) = [{}], {} distinct values selected",
                s.estimator,
                med.join(", "),
                s.distinct_values
            );
        }
        out
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-quantity and per-channel NRMSE of every trace. Quantities whose truth
/// has a zero-range channel (for example a displacement nobody excites) are
/// left out rather than failing the whole report.
pub fn compare_report(traces: &[EstimateTrace], truth: &TruthTrajectory, skip: f64) -> Result<ScoreReport> {
    let mut rows = Vec::new();
    let mut selected_q = Vec::new();
    for trace in traces {
        for q in Quantity::ALL {
            let score = match score_quantity(trace, truth, q, skip) {
                Ok(s) => s,
                Err(Error::InvalidInput(msg)) if msg.contains("zero range") => continue,
                Err(e) => return Err(e),
            };
            rows.push(ScoreRow {
                estimator: trace.estimator.clone(),
                quantity: q,
                channel: "all".into(),
                nrmse: score.value,
            });
            for (j, v) in score.per_channel.iter().enumerate() {
                rows.push(ScoreRow {
                    estimator: trace.estimator.clone(),
                    quantity: q,
                    channel: q.channel_name(j),
                    nrmse: *v,
                });
            }
        }
        if let Some(sel) = &trace.selected_q {
            let dims = sel.first().map(|r| r.len()).unwrap_or(0);
            let mut median_log10 = Vec::with_capacity(dims);
            for d in 0..dims {
                let mut logs: Vec<f64> = sel.iter().map(|r| r[d].log10()).collect();
                median_log10.push(median(&mut logs));
            }
            let mut distinct: Vec<&Vec<f64>> = sel.iter().collect();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            distinct.dedup();
            selected_q.push(SelectedQSummary {
                estimator: trace.estimator.clone(),
                median_log10,
                distinct_values: distinct.len(),
            });
        }
    }
    Ok(ScoreReport {
        transient_skip: skip,
        rows,
        selected_q,
    })
}

/// Convergence summary of one variance series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDiagnostics {
    pub final_over_median: f64,
    pub max_over_median: f64,
    /// `max <= 10 * median`.
    pub bounded: bool,
    /// Sustained rise over the last third of the series.
    pub growing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub inputs: Vec<VarianceDiagnostics>,
    /// Trace of the input covariance.
    pub input_trace: VarianceDiagnostics,
    pub state_trace: VarianceDiagnostics,
}

/// Fraction of non-decreasing increments required over the last third.
const GROWTH_MONOTONE_FRACTION: f64 = 0.9;
/// Minimum relative rise across the last third.
const GROWTH_MIN_RISE: f64 = 0.02;

pub fn variance_diagnostics(series: &[f64]) -> VarianceDiagnostics {
    if series.is_empty() {
        return VarianceDiagnostics {
            final_over_median: f64::NAN,
            max_over_median: f64::NAN,
            bounded: false,
            growing: false,
        };
    }
    let mut sorted = series.to_vec();
    let med = median(&mut sorted);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = *series.last().unwrap();
    let ratio = |v: f64| if med > 0.0 { v / med } else if v == 0.0 { 1.0 } else { f64::INFINITY };

    let start = series.len() - series.len() / 3;
    let tail = &series[start.min(series.len() - 1)..];
    let growing = if tail.len() >= 3 {
        let ups = tail
            .windows(2)
            .filter(|w| w[1] >= w[0] - 1e-12 * w[0].abs())
            .count();
        let frac = ups as f64 / (tail.len() - 1) as f64;
        let first = tail[0];
        frac >= GROWTH_MONOTONE_FRACTION && tail[tail.len() - 1] > first + GROWTH_MIN_RISE * first.abs()
    } else {
        false
    };
    VarianceDiagnostics {
        final_over_median: ratio(last),
        max_over_median: ratio(max),
        bounded: max <= 10.0 * med || (max == 0.0 && med == 0.0),
        growing,
    }
}

/// Boundedness and growth of every input variance and of `trace(P)`.
/// Diagnostics over the samples at or after `skip` seconds.
pub fn covariance_diagnostics(trace: &EstimateTrace, skip: f64) -> CovarianceReport {
    let first = trace.times.iter().position(|&t| t >= skip).unwrap_or(trace.len());
    let vars = trace.input_variances.rows(first, trace.len() - first);
    let inputs = vars
        .column_iter()
        .map(|c| variance_diagnostics(&c.iter().copied().collect::<Vec<_>>()))
        .collect();
    let input_trace: Vec<f64> = vars.row_iter().map(|r| r.sum()).collect();
    CovarianceReport {
        inputs,
        input_trace: variance_diagnostics(&input_trace),
        state_trace: variance_diagnostics(&trace.state_cov_trace[first..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp(t: usize) -> (DMatrix<f64>, Vec<f64>) {
        let truth = DMatrix::from_fn(t, 1, |i, _| i as f64 / (t - 1) as f64);
        let times = (0..t).map(|i| i as f64 * 0.01).collect();
        (truth, times)
    }

    #[test]
    fn identical_series_score_zero() {
        let (truth, times) = ramp(11);
        assert_eq!(nrmse(&truth, &truth, &times, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn constant_offset_on_unit_range() {
        let (truth, times) = ramp(11);
        let est = truth.add_scalar(0.1);
        let r = nrmse(&est, &truth, &times, 0.0).unwrap();
        assert_relative_eq!(r.value, 0.1, epsilon = 1e-15);
        assert_relative_eq!(r.per_channel[0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn sum_aggregation_scales_with_count() {
        let (truth, times) = ramp(11);
        let est = truth.add_scalar(0.1);
        let r = nrmse_with(&est, &truth, &[1.0], &times, 0.0, Aggregation::Sum).unwrap();
        assert_relative_eq!(r.value, 1.1, epsilon = 1e-14);
    }

    #[test]
    fn zero_range_channel_is_rejected() {
        let truth = DMatrix::from_element(5, 2, 1.0);
        let times: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert!(matches!(nrmse(&truth, &truth, &times, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn skip_excludes_early_rows() {
        let (truth, times) = ramp(11);
        let mut est = truth.clone();
        est[(0, 0)] += 5.0;
        assert_eq!(nrmse(&est, &truth, &times, 0.005).unwrap().value, 0.0);
    }

    #[test]
    fn constant_variance_is_bounded() {
        let d = variance_diagnostics(&[2.0; 50]);
        assert!(d.bounded && !d.growing);
        assert_eq!(d.final_over_median, 1.0);
    }

    #[test]
    fn geometric_growth_is_unbounded() {
        let s: Vec<f64> = (0..1000).map(|i| 1.01f64.powi(i)).collect();
        let d = variance_diagnostics(&s);
        assert!(!d.bounded);
        assert!(d.growing);
        let med = 0.5 * (1.01f64.powi(499) + 1.01f64.powi(500));
        assert_relative_eq!(d.final_over_median, 1.01f64.powi(999) / med, max_relative = 1e-9);
    }
}
