//! Joint input-state estimators.
//!
//! * [`uf`]: the universal filter, a minimum-variance unbiased recursion
//!   that estimates the input by weighted least squares from the
//!   innovation and then corrects the state with a range-restricted gain.
//! * [`us`]: the universal smoother, the same idea over a window of
//!   `N + 1` future measurements, carrying the cross-covariances that the
//!   overlapping windows create.
//! * [`akf`]: an augmented Kalman filter with a random-walk input model,
//!   kept as a baseline.
//!
//! Each step function is a pure map `(model, state, data) -> (state, result)`.
//! The [`JointEstimator`] trait wraps them for the drivers in [`run`] and the
//! filter array in [`crate::tuner`].

pub mod akf;
pub mod run;
pub mod uf;
pub mod us;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::DEFAULT_RANK_TOL;
use crate::sim::MeasurementSet;

pub use akf::{akf_step, AugmentedKalmanFilter, AugmentedState};
pub use run::{run_estimator, CovarianceHygiene, RunOutput};
pub use uf::{uf_step, FilterState, UniversalFilter};
pub use us::{build_extended_matrices, us_step, ExtendedMatrices, SmootherState, UniversalSmoother};

/// Relative rank thresholds used inside the recursions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Singular values below `pinv * sigma_max` are dropped in pseudoinverses.
    pub pinv: f64,
    /// Threshold for the range basis behind the state gain.
    pub range: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pinv: DEFAULT_RANK_TOL,
            range: DEFAULT_RANK_TOL,
        }
    }
}

/// Everything one recursion step produces besides the next state.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// `p_k` estimate.
    pub input_estimate: DVector<f64>,
    /// Covariance of the `p_k` estimate.
    pub input_covariance: DMatrix<f64>,
    /// A-priori state after adding the estimated input's contribution.
    pub prior_state: DVector<f64>,
    pub posterior_state: DVector<f64>,
    pub posterior_covariance: DMatrix<f64>,
    pub gain_m: DMatrix<f64>,
    pub gain_k: DMatrix<f64>,
    /// Measurement minus its prediction from the a-priori state and the
    /// estimated input; the argument of the final state correction.
    pub innovation_residual: DVector<f64>,
    /// Covariance the state gain is computed from: the residual covariance
    /// for the universal filter and smoother, the innovation covariance for
    /// the augmented filter.
    pub residual_covariance: DMatrix<f64>,
}

/// Common driver interface over the three estimators.
pub trait JointEstimator: Clone + Send + Sync {
    /// Future samples needed beyond `k` (the smoothing window).
    fn lookahead(&self) -> usize;

    /// Advances one step using sample `k` (and `k + 1 ..= k + lookahead`).
    fn step(&mut self, data: &MeasurementSet, k: usize) -> Result<StepResult>;

    /// Overwrites state estimate and every covariance with `other`'s, keeping
    /// this estimator's own noise model.
    fn adopt(&mut self, other: &Self);

    /// Process-noise hypothesis as sortable key, smallest first.
    fn noise_key(&self) -> Vec<f64>;
}
