//! Augmented Kalman filter with a random-walk input model.
//!
//! The augmented state is `z = [x; p]` with `p_k = p_{k-1} + eta`. Its
//! accuracy depends on the two noise levels, which the filter array in
//! [`crate::tuner`] searches jointly.

use nalgebra::{DMatrix, DVector};

use super::{JointEstimator, StepResult};
use crate::error::{Error, Result};
use crate::linalg::{self, set_block, symmetrize};
use crate::model::DiscreteStateSpace;
use crate::sim::MeasurementSet;

#[derive(Debug, Clone)]
pub struct AugmentedState {
    pub z_hat: DVector<f64>,
    pub p_z: DMatrix<f64>,
    /// State process-noise level (scales the identity).
    pub q_x: f64,
    /// Input random-walk level (scales the identity).
    pub q_p: f64,
    pub step_index: usize,
}

impl AugmentedState {
    pub fn initial(n: usize, l: usize, p0: f64, q_x: f64, q_p: f64) -> Self {
        Self {
            z_hat: DVector::zeros(n + l),
            p_z: DMatrix::identity(n + l, n + l) * p0,
            q_x,
            q_p,
            step_index: 0,
        }
    }
}

fn transition(dss: &DiscreteStateSpace) -> DMatrix<f64> {
    let (n, l) = (dss.n_states(), dss.n_inputs());
    let mut f = DMatrix::identity(n + l, n + l);
    set_block(&mut f, 0, 0, dss.a());
    set_block(&mut f, 0, n, dss.b());
    f
}

fn observation(dss: &DiscreteStateSpace) -> DMatrix<f64> {
    let (n, l, q) = (dss.n_states(), dss.n_inputs(), dss.n_outputs());
    let mut h = DMatrix::zeros(q, n + l);
    set_block(&mut h, 0, 0, dss.c());
    set_block(&mut h, 0, n, dss.d());
    h
}

/// Predict and update once. The step result's residual is the a-posteriori
/// one, `y - H z^`.
pub fn akf_step(
    dss: &DiscreteStateSpace,
    state: &AugmentedState,
    y: &DVector<f64>,
) -> Result<(AugmentedState, StepResult)> {
    let k_idx = state.step_index + 1;
    let (n, l) = (dss.n_states(), dss.n_inputs());
    if y.len() != dss.n_outputs() {
        return Err(Error::Dimension(format!(
            "measurement has {} channels, model has {}",
            y.len(),
            dss.n_outputs()
        )));
    }
    if !(state.q_x >= 0.0 && state.q_p >= 0.0) {
        return Err(Error::InvalidParameter("AKF noise levels must be >= 0".into()));
    }
    let f = transition(dss);
    let h = observation(dss);
    let mut qz = DMatrix::zeros(n + l, n + l);
    for i in 0..n {
        qz[(i, i)] = state.q_x;
    }
    for i in n..n + l {
        qz[(i, i)] = state.q_p;
    }

    let z_prior = &f * &state.z_hat;
    let p_prior = symmetrize(&(&f * &state.p_z * f.transpose() + qz));
    let innov = y - &h * &z_prior;
    let s = symmetrize(&(&h * &p_prior * h.transpose() + dss.r()));
    let s_inv = linalg::spd_inverse(&s).ok_or(Error::Divergence {
        step: "innovation covariance",
        index: k_idx,
    })?;
    let gain = &p_prior * h.transpose() * s_inv;
    let z_post = &z_prior + &gain * innov;
    let i_kh = DMatrix::<f64>::identity(n + l, n + l) - &gain * &h;
    let p_post = symmetrize(&(&i_kh * &p_prior * i_kh.transpose() + &gain * dss.r() * gain.transpose()));
    if !linalg::all_finite(&p_post) || !linalg::all_finite_vec(&z_post) {
        return Err(Error::Divergence { step: "update", index: k_idx });
    }
    let residual = y - &h * &z_post;

    let next = AugmentedState {
        z_hat: z_post.clone(),
        p_z: p_post.clone(),
        q_x: state.q_x,
        q_p: state.q_p,
        step_index: k_idx,
    };
    let result = StepResult {
        input_estimate: z_post.rows(n, l).clone_owned(),
        input_covariance: p_post.view((n, n), (l, l)).clone_owned(),
        prior_state: z_prior.rows(0, n).clone_owned(),
        posterior_state: z_post.rows(0, n).clone_owned(),
        posterior_covariance: p_post.view((0, 0), (n, n)).clone_owned(),
        gain_m: gain.rows(n, l).clone_owned(),
        gain_k: gain.rows(0, n).clone_owned(),
        innovation_residual: residual,
        residual_covariance: s,
    };
    Ok((next, result))
}

#[derive(Debug, Clone)]
pub struct AugmentedKalmanFilter {
    pub dss: DiscreteStateSpace,
    pub state: AugmentedState,
}

impl AugmentedKalmanFilter {
    pub fn new(dss: DiscreteStateSpace, p0: f64, q_x: f64, q_p: f64) -> Self {
        let state = AugmentedState::initial(dss.n_states(), dss.n_inputs(), p0, q_x, q_p);
        Self { dss, state }
    }
}

impl JointEstimator for AugmentedKalmanFilter {
    fn lookahead(&self) -> usize {
        0
    }

    fn step(&mut self, data: &MeasurementSet, k: usize) -> Result<StepResult> {
        let mut prev = self.state.clone();
        prev.step_index = k.saturating_sub(1);
        let (next, result) = akf_step(&self.dss, &prev, &data.sample(k))?;
        self.state = next;
        Ok(result)
    }

    fn adopt(&mut self, other: &Self) {
        self.state.z_hat = other.state.z_hat.clone();
        self.state.p_z = other.state.p_z.clone();
    }

    fn noise_key(&self) -> Vec<f64> {
        vec![self.state.q_x, self.state.q_p]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_update_matches_hand_computation() {
        let one = DMatrix::identity(1, 1);
        let dss = DiscreteStateSpace::new(
            one.clone() * 0.5,
            one.clone(),
            one.clone(),
            DMatrix::zeros(1, 1),
            1.0,
            DMatrix::zeros(1, 1),
            one,
        )
        .unwrap();
        let st = AugmentedState::initial(1, 1, 1.0, 0.0, 0.0);
        let (next, _) = akf_step(&dss, &st, &DVector::from_element(1, 3.0)).unwrap();
        // P- = F F^T = [[1.25, 1], [1, 1]], S = 2.25, K = [1.25, 1]/2.25.
        assert_relative_eq!(next.z_hat[0], 3.0 * 1.25 / 2.25, epsilon = 1e-14);
        assert_relative_eq!(next.z_hat[1], 3.0 / 2.25, epsilon = 1e-14);
        assert_relative_eq!(next.p_z[(0, 0)], 1.25 - 1.25 * 1.25 / 2.25, epsilon = 1e-14);
    }
}
