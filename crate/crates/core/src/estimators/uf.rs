//! Universal filter.

use nalgebra::{DMatrix, DVector};

use super::{JointEstimator, StepResult, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::model::DiscreteStateSpace;
use crate::sim::MeasurementSet;

#[derive(Debug, Clone)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p_x: DMatrix<f64>,
    pub step_index: usize,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, p_x: DMatrix<f64>) -> Self {
        Self {
            x_hat,
            p_x,
            step_index: 0,
        }
    }

    /// Zero state with `P = p0 * I`.
    pub fn initial(n: usize, p0: f64) -> Self {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n) * p0)
    }
}

fn check(m: &DMatrix<f64>, step: &'static str, index: usize) -> Result<()> {
    if linalg::all_finite(m) {
        Ok(())
    } else {
        Err(Error::Divergence { step, index })
    }
}

/// One filtering cycle: input estimation by weighted least squares on the
/// innovation, a-priori state with the estimated input, then a correction
/// whose gain is restricted to the range of the residual covariance.
pub fn uf_step(
    dss: &DiscreteStateSpace,
    state: &FilterState,
    y: &DVector<f64>,
    tol: &Tolerances,
) -> Result<(FilterState, StepResult)> {
    let k_idx = state.step_index + 1;
    if y.len() != dss.n_outputs() {
        return Err(Error::Dimension(format!(
            "measurement has {} channels, model has {}",
            y.len(),
            dss.n_outputs()
        )));
    }
    if !linalg::all_finite_vec(y) {
        return Err(Error::Divergence { step: "measurement", index: k_idx });
    }
    let (a, b, c, d, g, q, r) = (dss.a(), dss.b(), dss.c(), dss.d(), dss.g(), dss.q(), dss.r());
    let p_prev = &state.p_x;

    // Input estimation.
    let x_pred = a * &state.x_hat;
    let apa = a * p_prev * a.transpose();
    let p_e = symmetrize(&(c * (&apa + q) * c.transpose() + r));
    check(&p_e, "innovation covariance", k_idx)?;
    let (m, p_p) = linalg::weighted_least_squares(g, &p_e, tol.pinv);
    check(&m, "input gain", k_idx)?;
    let p_hat = &m * (y - c * &x_pred);

    // State estimation.
    let x_prior = &x_pred + b * &p_hat;
    let p_xp = -(p_prev * a.transpose() * c.transpose() * m.transpose());
    let p_px = p_xp.transpose();
    let p_pw = -(&m * c * q);
    let p_wp = p_pw.transpose();
    let p_cal = symmetrize(
        &(&apa + b * &p_p * b.transpose() + q + a * &p_xp * b.transpose() + b * &p_px * a.transpose()
            + b * &p_pw
            + &p_wp * b.transpose()),
    );
    let p_p_cal = &p_px * a.transpose() + &p_p * b.transpose() + &p_pw;
    let p_pv = -(&m * r);
    let p_vp = p_pv.transpose();
    let p_v_cal = &p_vp * b.transpose();
    let upsilon = c * &p_cal + d * &p_p_cal + &p_v_cal;
    let psi = symmetrize(
        &(c * upsilon.transpose()
            + d * (&p_p_cal * c.transpose() + &p_p * d.transpose() + &p_pv)
            + &p_v_cal * c.transpose()
            + &p_vp * d.transpose()
            + r),
    );
    check(&psi, "residual covariance", k_idx)?;
    let k = linalg::range_restricted_gain(&upsilon.transpose(), &psi, tol.range, p_e.diagonal().amax())
        .ok_or(Error::Divergence { step: "state gain", index: k_idx })?;
    // The posterior covariance K Psi K^T - Upsilon^T K^T - K Upsilon + P_cal,
    // evaluated as L Lambda L^T with L the map from [x~_{k-1}; w_k; v_k] to
    // the posterior error. Same value, but PSD by construction.
    let bm = b * &m;
    let mca = &m * c * a;
    let pi_x = a - &bm * c * a;
    let pi_w = DMatrix::<f64>::identity(a.nrows(), a.nrows()) - &bm * c;
    let pi_v = -&bm;
    let om_x = c * &pi_x - d * &mca;
    let om_w = c * &pi_w - d * &m * c;
    let om_v = c * &pi_v - d * &m + DMatrix::<f64>::identity(r.nrows(), r.nrows());
    let l_x = pi_x - &k * om_x;
    let l_w = pi_w - &k * om_w;
    let l_v = pi_v - &k * om_v;
    let p_post = symmetrize(
        &(&l_x * p_prev * l_x.transpose() + &l_w * q * l_w.transpose() + &l_v * r * l_v.transpose()),
    );
    check(&p_post, "posterior covariance", k_idx)?;
    let residual = y - c * &x_prior - d * &p_hat;
    let x_post = &x_prior + &k * &residual;
    if !linalg::all_finite_vec(&x_post) {
        return Err(Error::Divergence { step: "state update", index: k_idx });
    }

    let next = FilterState {
        x_hat: x_post.clone(),
        p_x: p_post.clone(),
        step_index: k_idx,
    };
    let result = StepResult {
        input_estimate: p_hat,
        input_covariance: p_p,
        prior_state: x_prior,
        posterior_state: x_post,
        posterior_covariance: p_post,
        gain_m: m,
        gain_k: k,
        innovation_residual: residual,
        residual_covariance: psi,
    };
    Ok((next, result))
}

/// Stateful wrapper around [`uf_step`].
#[derive(Debug, Clone)]
pub struct UniversalFilter {
    pub dss: DiscreteStateSpace,
    pub state: FilterState,
    pub tol: Tolerances,
}

impl UniversalFilter {
    pub fn new(dss: DiscreteStateSpace, state: FilterState) -> Self {
        Self {
            dss,
            state,
            tol: Tolerances::default(),
        }
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }
}

impl JointEstimator for UniversalFilter {
    fn lookahead(&self) -> usize {
        0
    }

    fn step(&mut self, data: &MeasurementSet, k: usize) -> Result<StepResult> {
        let mut prev = self.state.clone();
        prev.step_index = k.saturating_sub(1);
        let (next, result) = uf_step(&self.dss, &prev, &data.sample(k), &self.tol)?;
        self.state = next;
        Ok(result)
    }

    fn adopt(&mut self, other: &Self) {
        self.state = other.state.clone();
    }

    fn noise_key(&self) -> Vec<f64> {
        vec![self.dss.q()[(0, 0)]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model() -> DiscreteStateSpace {
        let one = DMatrix::identity(1, 1);
        DiscreteStateSpace::new(
            one.clone(),
            one.clone(),
            one.clone(),
            DMatrix::zeros(1, 1),
            1.0,
            DMatrix::zeros(1, 1),
            one,
        )
        .unwrap()
    }

    #[test]
    fn scalar_hand_trace() {
        let dss = scalar_model();
        let state = FilterState::initial(1, 0.0);
        let (next, res) = uf_step(&dss, &state, &DVector::from_element(1, 2.0), &Tolerances::default()).unwrap();
        assert!((res.input_estimate[0] - 2.0).abs() < 1e-14);
        assert!((res.prior_state[0] - 2.0).abs() < 1e-14);
        assert_eq!(res.gain_k[(0, 0)], 0.0);
        assert!((next.x_hat[0] - 2.0).abs() < 1e-14);
        assert!((next.p_x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_innovation_is_a_fixed_point() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
        let dss = DiscreteStateSpace::new(
            a.clone(),
            b,
            c.clone(),
            DMatrix::zeros(2, 1),
            0.1,
            DMatrix::identity(2, 2) * 1e-3,
            DMatrix::identity(2, 2) * 1e-2,
        )
        .unwrap();
        let x_prev = DVector::from_vec(vec![0.4, -1.0]);
        let state = FilterState::new(x_prev.clone(), DMatrix::identity(2, 2) * 0.1);
        let y = &c * &a * &x_prev;
        let (next, res) = uf_step(&dss, &state, &y, &Tolerances::default()).unwrap();
        assert!(res.input_estimate.norm() < 1e-14);
        assert!((next.x_hat - a * x_prev).norm() < 1e-14);
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let dss = scalar_model();
        let state = FilterState::initial(1, 0.0);
        assert!(uf_step(&dss, &state, &DVector::zeros(2), &Tolerances::default()).is_err());
    }

    #[test]
    fn non_finite_measurement_reports_divergence() {
        let dss = scalar_model();
        let state = FilterState::initial(1, 0.0);
        let err = uf_step(&dss, &state, &DVector::from_element(1, f64::NAN), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }
}
