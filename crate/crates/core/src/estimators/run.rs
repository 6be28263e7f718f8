//! Drivers that run one estimator over a measurement set.

use nalgebra::DMatrix;

use super::{JointEstimator, StepResult};
use crate::error::Result;
use crate::eval::{EstimateTrace, TraceBuilder};
use crate::linalg;
use crate::model::StructuralSystem;
use crate::sim::MeasurementSet;

/// Worst symmetry defect and smallest eigenvalue seen over a set of
/// covariance matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceHygiene {
    pub max_symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub checked: usize,
}

impl Default for CovarianceHygiene {
    fn default() -> Self {
        Self {
            max_symmetry_defect: 0.0,
            min_eigenvalue: f64::INFINITY,
            checked: 0,
        }
    }
}

impl CovarianceHygiene {
    pub fn observe(&mut self, p: &DMatrix<f64>) {
        self.max_symmetry_defect = self.max_symmetry_defect.max(linalg::symmetry_defect(p));
        self.min_eigenvalue = self.min_eigenvalue.min(linalg::min_eigenvalue(p));
        self.checked += 1;
    }

    pub fn observe_step(&mut self, step: &StepResult) {
        self.observe(&step.posterior_covariance);
        self.observe(&step.input_covariance);
    }

    pub fn merge(&mut self, other: &CovarianceHygiene) {
        self.max_symmetry_defect = self.max_symmetry_defect.max(other.max_symmetry_defect);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.checked += other.checked;
    }

    /// Symmetric within `tol` and no eigenvalue below `-tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_symmetry_defect <= tol && self.min_eigenvalue >= -tol
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: EstimateTrace,
    pub hygiene: CovarianceHygiene,
    /// Trailing samples left unestimated because the window ran off the data.
    pub truncated_tail: usize,
}

/// Runs `estimator` from sample 1 to the last sample whose window fits in
/// the data. Sample 0 is the initial condition.
pub fn run_estimator<E: JointEstimator>(
    estimator: &mut E,
    system: &StructuralSystem,
    data: &MeasurementSet,
    name: &str,
) -> Result<RunOutput> {
    let look = estimator.lookahead();
    let mut builder = TraceBuilder::new(system, name, look)?;
    let mut hygiene = CovarianceHygiene::default();
    let last = data.len().saturating_sub(1 + look);
    for k in 1..=last {
        let step = estimator.step(data, k)?;
        hygiene.observe_step(&step);
        builder.push(k, data.times[k], &step);
    }
    Ok(RunOutput {
        trace: builder.finish(),
        hygiene,
        truncated_tail: look.min(data.len().saturating_sub(1)),
    })
}
