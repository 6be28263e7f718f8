//! Filter-array self-tuning of the process-noise level.
//!
//! Every candidate runs the same estimator under its own process-noise
//! hypothesis `Q = q I`. After each step the candidate with the smallest
//! windowed residual energy wins, and its state and covariances are copied
//! into every other candidate.

use std::collections::VecDeque;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    AugmentedKalmanFilter, CovarianceHygiene, JointEstimator, StepResult, Tolerances, UniversalFilter,
    UniversalSmoother,
};
use crate::estimators::uf::FilterState;
use crate::eval::{EstimateTrace, TraceBuilder};
use crate::model::{DiscreteStateSpace, StructuralSystem};
use crate::sim::MeasurementSet;

/// Logarithmic lattice of noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub q_values: Vec<f64>,
    pub spacing_exponent: f64,
    pub bounds: (f64, f64),
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.q_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_values.is_empty()
    }

    /// A grid holding exactly one value.
    pub fn single(q: f64) -> Self {
        Self {
            q_values: vec![q],
            spacing_exponent: 1.0,
            bounds: (q, q),
        }
    }
}

/// `10^(log10(min) + j * spacing)` for `j = 0..count`, where
/// `count = round((log10(max) - log10(min)) / spacing)`.
pub fn build_candidate_grid(min: f64, max: f64, spacing_exponent: f64) -> Result<CandidateGrid> {
    if !(min > 0.0 && max > min && min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid bounds must satisfy 0 < min < max, got [{min}, {max}]"
        )));
    }
    if !(spacing_exponent > 0.0 && spacing_exponent.is_finite()) {
        return Err(Error::InvalidParameter("grid spacing must be > 0".into()));
    }
    let lo = min.log10();
    let count = ((max.log10() - lo) / spacing_exponent).round() as usize;
    let q_values = (0..count.max(1))
        .map(|j| if j == 0 { min } else { 10f64.powf(lo + j as f64 * spacing_exponent) })
        .collect();
    Ok(CandidateGrid {
        q_values,
        spacing_exponent,
        bounds: (min, max),
    })
}

/// Rolling window of the last `W` squared residual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorWindow {
    capacity: usize,
    values: VecDeque<f64>,
}

impl ErrorWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("evaluation window must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    /// Sum over the stored values, recomputed from scratch so that it never
    /// accumulates rounding from add/remove updates.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.values.iter()
    }
}

/// Records `||residual||^2` and returns the windowed error `E_k`.
pub fn innovation_error_update(window: &mut ErrorWindow, residual: &DVector<f64>) -> f64 {
    window.push(residual.norm_squared());
    window.total()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub step_index: usize,
    pub selected_q: f64,
    /// Input random-walk level, for the two-parameter grid.
    pub selected_q_input: Option<f64>,
    pub selected_error: f64,
    pub per_candidate_errors: Option<Vec<f64>>,
}

/// Candidates and their error windows.
#[derive(Debug, Clone)]
pub struct ArrayState<E: JointEstimator> {
    pub candidates: Vec<E>,
    pub windows: Vec<ErrorWindow>,
    pub winner_index: usize,
    pub step_index: usize,
    /// Keep every candidate's error in the selection records.
    pub record_all_errors: bool,
}

impl<E: JointEstimator> ArrayState<E> {
    pub fn new(candidates: Vec<E>, window: usize) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("filter array needs at least one candidate".into()));
        }
        let windows = vec![ErrorWindow::new(window)?; candidates.len()];
        Ok(Self {
            candidates,
            windows,
            winner_index: 0,
            step_index: 0,
            record_all_errors: false,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::Numerical(_))
}

/// Advances every candidate on sample `k`, selects the winner and broadcasts
/// its state. Divergent candidates score `+inf` for the step, which keeps
/// them out of the selection until it leaves their window.
pub fn array_step<E: JointEstimator>(
    array: &mut ArrayState<E>,
    data: &MeasurementSet,
    k: usize,
) -> Result<(SelectionRecord, StepResult)> {
    let outcomes: Vec<Result<Option<StepResult>>> = array
        .candidates
        .par_iter_mut()
        .zip(array.windows.par_iter_mut())
        .map(|(cand, window)| match cand.step(data, k) {
            Ok(step) => {
                innovation_error_update(window, &step.innovation_residual);
                Ok(Some(step))
            }
            Err(e) if is_divergence(&e) => {
                window.push(f64::INFINITY);
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect();
    let mut steps = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        steps.push(o?);
    }
    let errors: Vec<f64> = array.windows.iter().map(|w| w.total()).collect();
    let keys: Vec<Vec<f64>> = array.candidates.iter().map(|c| c.noise_key()).collect();

    let mut best: Option<usize> = None;
    for i in 0..errors.len() {
        if !errors[i].is_finite() || steps[i].is_none() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = match errors[i].total_cmp(&errors[b]) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => keys[i] < keys[b],
                };
                Some(if better { i } else { b })
            }
        };
    }
    let winner = best.ok_or(Error::ArrayDivergence(k))?;

    let template = array.candidates[winner].clone();
    array.candidates.par_iter_mut().for_each(|c| c.adopt(&template));
    array.winner_index = winner;
    array.step_index = k;

    let key = &keys[winner];
    let record = SelectionRecord {
        step_index: k,
        selected_q: key[0],
        selected_q_input: key.get(1).copied(),
        selected_error: errors[winner],
        per_candidate_errors: array.record_all_errors.then(|| errors.clone()),
    };
    let step = steps.swap_remove(winner).expect("winner has a step result");
    Ok((record, step))
}

#[derive(Debug, Clone)]
pub struct TunerOutput {
    pub trace: EstimateTrace,
    pub records: Vec<SelectionRecord>,
    pub hygiene: CovarianceHygiene,
}

/// Runs the array over the whole measurement set, starting at sample 1.
pub fn run_array<E: JointEstimator>(
    array: &mut ArrayState<E>,
    system: &StructuralSystem,
    data: &MeasurementSet,
    name: &str,
) -> Result<TunerOutput> {
    let look = array.candidates[0].lookahead();
    let mut builder = TraceBuilder::new(system, name, look)?;
    let mut hygiene = CovarianceHygiene::default();
    let mut records = Vec::new();
    let last = data.len().saturating_sub(1 + look);
    for k in 1..=last {
        let (record, step) = array_step(array, data, k)?;
        hygiene.observe_step(&step);
        builder.push(k, data.times[k], &step);
        builder.push_selected(std::iter::once(record.selected_q).chain(record.selected_q_input).collect());
        records.push(record);
    }
    Ok(TunerOutput {
        trace: builder.finish(),
        records,
        hygiene,
    })
}

/// Universal-filter candidates over `grid`, all starting from zero with
/// `P = p0 I`.
pub fn uf_array(
    dss: &DiscreteStateSpace,
    grid: &CandidateGrid,
    window: usize,
    p0: f64,
    tol: Tolerances,
) -> Result<ArrayState<UniversalFilter>> {
    let n = dss.n_states();
    let candidates = grid
        .q_values
        .iter()
        .map(|&q| Ok(UniversalFilter::new(dss.with_q_scalar(q)?, FilterState::initial(n, p0)).with_tolerances(tol)))
        .collect::<Result<Vec<_>>>()?;
    ArrayState::new(candidates, window)
}

/// Universal-smoother candidates sharing one set of stacked matrices.
pub fn us_array(
    dss: &DiscreteStateSpace,
    smoothing_window: usize,
    grid: &CandidateGrid,
    window: usize,
    p0: f64,
    tol: Tolerances,
) -> Result<ArrayState<UniversalSmoother>> {
    let base = UniversalSmoother::new(dss.clone(), smoothing_window, p0)?.with_tolerances(tol);
    let candidates = grid
        .q_values
        .iter()
        .map(|&q| {
            let mut c = base.clone();
            c.dss = dss.with_q_scalar(q)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    ArrayState::new(candidates, window)
}

/// Augmented-filter candidates over the product of two grids, row-major in
/// `(q_x, q_p)`.
pub fn akf_array(
    dss: &DiscreteStateSpace,
    grid_x: &CandidateGrid,
    grid_p: &CandidateGrid,
    window: usize,
    p0: f64,
) -> Result<ArrayState<AugmentedKalmanFilter>> {
    let mut candidates = Vec::with_capacity(grid_x.len() * grid_p.len());
    for &qx in &grid_x.q_values {
        for &qp in &grid_p.q_values {
            candidates.push(AugmentedKalmanFilter::new(dss.clone(), p0, qx, qp));
        }
    }
    ArrayState::new(candidates, window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        assert_eq!(build_candidate_grid(1e-24, 1e3, 0.01).unwrap().len(), 2700);
        let g = build_candidate_grid(1e-24, 1e3, 0.3).unwrap();
        assert_eq!(g.len(), 90);
        assert_eq!(g.q_values[0], 1e-24);
    }

    #[test]
    fn grid_rejects_bad_bounds() {
        assert!(build_candidate_grid(0.0, 1.0, 0.1).is_err());
        assert!(build_candidate_grid(1.0, 0.5, 0.1).is_err());
        assert!(build_candidate_grid(1.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn window_sum_of_two() {
        let mut w = ErrorWindow::new(2).unwrap();
        innovation_error_update(&mut w, &DVector::from_vec(vec![3.0]));
        let e = innovation_error_update(&mut w, &DVector::from_vec(vec![4.0]));
        assert_eq!(e, 25.0);
        let e = innovation_error_update(&mut w, &DVector::from_vec(vec![0.0]));
        assert_eq!(e, 16.0);
    }

    #[test]
    fn infinite_entry_leaves_after_w_pushes() {
        let mut w = ErrorWindow::new(3).unwrap();
        w.push(f64::INFINITY);
        w.push(1.0);
        w.push(1.0);
        assert!(w.total().is_infinite());
        w.push(1.0);
        assert_eq!(w.total(), 3.0);
    }
}
