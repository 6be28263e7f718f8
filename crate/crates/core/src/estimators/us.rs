//! Universal smoother.
//!
//! A step at time `k` uses the stacked window `y_k ..= y_{k+N}`. The error
//! of the previous estimate is correlated with the process and measurement
//! noise inside the current window, so the state carries the
//! cross-covariances `P_xw` and `P_xv` next to `P`. All quadratic forms in
//! the joint error covariance are evaluated blockwise; the dense joint
//! matrix is only assembled on request by [`SmootherState::lambda`].

use nalgebra::{DMatrix, DVector};

use super::{JointEstimator, StepResult, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{self, set_block, symmetrize};
use crate::model::DiscreteStateSpace;
use crate::sim::MeasurementSet;

/// Stacked system matrices over a window of `N + 1` samples.
#[derive(Debug, Clone)]
pub struct ExtendedMatrices {
    pub window: usize,
    /// Rows `C A^i`, `i = 0..=N`.
    pub c_ext: DMatrix<f64>,
    /// Direct feedthrough of the stacked inputs into the stacked outputs.
    pub d_ext: DMatrix<f64>,
    /// Map from the stacked process noise `w_k ..= w_{k+N}` to the outputs,
    /// excluding the `w_k` path through `x_k`.
    pub h_ext: DMatrix<f64>,
    /// `d_ext + c_ext B E`: stacked input map seen from `x_{k-1}`.
    pub d_breve: DMatrix<f64>,
    /// `h_ext + [c_ext, 0]`.
    pub h_breve: DMatrix<f64>,
    /// `c_ext A`.
    pub c_ext_a: DMatrix<f64>,
    pub q_kk: DMatrix<f64>,
    pub q_kk1: DMatrix<f64>,
    pub r_kk: DMatrix<f64>,
    pub r_kk1: DMatrix<f64>,
    /// Block upper shift on the stacked process noise.
    pub shift_breve_w: DMatrix<f64>,
    /// Block upper shift on the stacked measurement noise.
    pub shift_breve_v: DMatrix<f64>,
    /// Selector of the newest process-noise block.
    pub shift_bar_w: DMatrix<f64>,
    /// Selector of the newest measurement-noise block.
    pub shift_bar_v: DMatrix<f64>,
}

fn block_diag(block: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let s = block.nrows();
    let mut out = DMatrix::zeros(s * count, s * count);
    for i in 0..count {
        set_block(&mut out, i * s, i * s, block);
    }
    out
}

fn upper_shift(dim: usize, count: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim * count, dim * count);
    for i in 0..count.saturating_sub(1) {
        set_block(&mut out, i * dim, (i + 1) * dim, &DMatrix::identity(dim, dim));
    }
    out
}

fn last_selector(dim: usize, count: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim * count, dim * count);
    set_block(&mut out, (count - 1) * dim, (count - 1) * dim, &DMatrix::identity(dim, dim));
    out
}

/// Builds the stacked matrices for a window of `window + 1` samples.
pub fn build_extended_matrices(dss: &DiscreteStateSpace, window: usize) -> Result<ExtendedMatrices> {
    let (n, l, q) = (dss.n_states(), dss.n_inputs(), dss.n_outputs());
    let nw = window + 1;
    let (a, b, c, d) = (dss.a(), dss.b(), dss.c(), dss.d());

    // C A^i for i = 0..=N.
    let mut c_pows = Vec::with_capacity(nw);
    let mut cur = c.clone();
    for _ in 0..nw {
        c_pows.push(cur.clone());
        cur = &cur * a;
    }
    let mut c_ext = DMatrix::zeros(nw * q, n);
    for (i, ca) in c_pows.iter().enumerate() {
        set_block(&mut c_ext, i * q, 0, ca);
    }

    let mut d_ext = DMatrix::zeros(nw * q, nw * l);
    let mut h_ext = DMatrix::zeros(nw * q, nw * n);
    set_block(&mut d_ext, 0, 0, d);
    for i in 1..nw {
        for j in 1..=i {
            let ca = &c_pows[i - j];
            let mut blk = ca * b;
            if i == j {
                blk += d;
            }
            set_block(&mut d_ext, i * q, j * l, &blk);
            set_block(&mut h_ext, i * q, j * n, ca);
        }
    }

    let mut be = DMatrix::zeros(n, nw * l);
    set_block(&mut be, 0, 0, b);
    let d_breve = &d_ext + &c_ext * be;
    let mut h_breve = h_ext.clone();
    {
        let mut col0 = h_breve.view_mut((0, 0), (nw * q, n));
        col0 += &c_ext;
    }
    let c_ext_a = &c_ext * a;

    let shift_breve_w = upper_shift(n, nw);
    let shift_breve_v = upper_shift(q, nw);
    let q_kk = block_diag(dss.q(), nw);
    let r_kk = block_diag(dss.r(), nw);
    let q_kk1 = &q_kk * shift_breve_w.transpose();
    let r_kk1 = &r_kk * shift_breve_v.transpose();

    Ok(ExtendedMatrices {
        window,
        c_ext,
        d_ext,
        h_ext,
        d_breve,
        h_breve,
        c_ext_a,
        q_kk,
        q_kk1,
        r_kk,
        r_kk1,
        shift_breve_w,
        shift_breve_v,
        shift_bar_w: last_selector(n, nw),
        shift_bar_v: last_selector(q, nw),
    })
}

#[derive(Debug, Clone)]
pub struct SmootherState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    /// `E[x~ w^T]` over the window's process-noise blocks (`n x (N+1)n`).
    pub p_xw: DMatrix<f64>,
    /// `E[x~ v^T]` over the window's measurement-noise blocks.
    pub p_xv: DMatrix<f64>,
    pub step_index: usize,
}

impl SmootherState {
    /// Zero state, `P = p0 * I`, no cross-covariance.
    pub fn initial(dss: &DiscreteStateSpace, window: usize, p0: f64) -> Self {
        let n = dss.n_states();
        let nw = window + 1;
        Self {
            x_hat: DVector::zeros(n),
            p: DMatrix::identity(n, n) * p0,
            p_xw: DMatrix::zeros(n, nw * n),
            p_xv: DMatrix::zeros(n, nw * dss.n_outputs()),
            step_index: 0,
        }
    }

    /// Dense joint covariance of `[x~_{k-1}; w_k..; v_k..]`.
    pub fn lambda(&self, dss: &DiscreteStateSpace) -> DMatrix<f64> {
        let n = self.p.nrows();
        let nwn = self.p_xw.ncols();
        let nv = self.p_xv.ncols();
        let nw = nwn / n.max(1);
        let mut out = DMatrix::zeros(n + nwn + nv, n + nwn + nv);
        set_block(&mut out, 0, 0, &self.p);
        set_block(&mut out, 0, n, &self.p_xw);
        set_block(&mut out, n, 0, &self.p_xw.transpose());
        set_block(&mut out, 0, n + nwn, &self.p_xv);
        set_block(&mut out, n + nwn, 0, &self.p_xv.transpose());
        set_block(&mut out, n, n, &block_diag(dss.q(), nw));
        set_block(&mut out, n + nwn, n + nwn, &block_diag(dss.r(), nw));
        out
    }
}

/// Row blocks of a linear map of the joint error `[x~; w; v]`.
struct ErrorMap {
    x: DMatrix<f64>,
    w: DMatrix<f64>,
    v: DMatrix<f64>,
}

/// Applies `I (x) block` on the left of a tall matrix, block by block.
fn block_diag_mul(block: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = block.nrows();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() / s {
        let prod = block * m.rows(i * s, s);
        out.rows_mut(i * s, s).copy_from(&prod);
    }
    out
}

/// `L1 * Lambda * L2^T` using the block structure of `Lambda`.
fn quad(st: &SmootherState, q: &DMatrix<f64>, r: &DMatrix<f64>, l1: &ErrorMap, l2: &ErrorMap) -> DMatrix<f64> {
    let xt = l2.x.transpose();
    let wt = l2.w.transpose();
    let vt = l2.v.transpose();
    let top = &st.p * &xt + &st.p_xw * &wt + &st.p_xv * &vt;
    let mid = st.p_xw.transpose() * &xt + block_diag_mul(q, &wt);
    let bot = st.p_xv.transpose() * &xt + block_diag_mul(r, &vt);
    &l1.x * top + &l1.w * mid + &l1.v * bot
}

fn check(m: &DMatrix<f64>, step: &'static str, index: usize) -> Result<()> {
    if linalg::all_finite(m) {
        Ok(())
    } else {
        Err(Error::Divergence { step, index })
    }
}

/// Stacks samples `k ..= k + window` into one vector.
pub fn measurement_window(data: &MeasurementSet, k: usize, window: usize) -> Result<DVector<f64>> {
    let needed = k + window + 1;
    if needed > data.len() {
        return Err(Error::EndOfData {
            index: k,
            needed,
            available: data.len(),
        });
    }
    let q = data.values.ncols();
    let mut out = DVector::zeros((window + 1) * q);
    for i in 0..=window {
        out.rows_mut(i * q, q).copy_from(&data.sample(k + i));
    }
    Ok(out)
}

/// One smoothing step from `x^_{k-1}` to `x^_k` using the stacked window
/// `y_window = [y_k; ...; y_{k+N}]`.
pub fn us_step(
    dss: &DiscreteStateSpace,
    ext: &ExtendedMatrices,
    state: &SmootherState,
    y_window: &DVector<f64>,
    tol: &Tolerances,
) -> Result<(SmootherState, StepResult)> {
    let k_idx = state.step_index + 1;
    let (n, l, qn) = (dss.n_states(), dss.n_inputs(), dss.n_outputs());
    let nw = ext.window + 1;
    let nv = nw * qn;
    if y_window.len() != nv {
        return Err(Error::Dimension(format!(
            "window has {} entries, expected {}",
            y_window.len(),
            nv
        )));
    }
    if state.p_xw.shape() != (n, nw * n) || state.p_xv.shape() != (n, nv) {
        return Err(Error::Dimension("cross-covariance shape does not match window".into()));
    }
    if !linalg::all_finite_vec(y_window) {
        return Err(Error::Divergence { step: "measurement", index: k_idx });
    }
    let (a, b, q, r) = (dss.a(), dss.b(), dss.q(), dss.r());
    let eye_v = DMatrix::<f64>::identity(nv, nv);

    // Input estimation over the window.
    let x_pred = a * &state.x_hat;
    let sigma = ErrorMap {
        x: ext.c_ext_a.clone(),
        w: ext.h_breve.clone(),
        v: eye_v.clone(),
    };
    let s = symmetrize(&quad(state, q, r, &sigma, &sigma));
    check(&s, "window innovation covariance", k_idx)?;
    let (m, p_stack) = linalg::weighted_least_squares(&ext.d_breve, &s, tol.pinv);
    check(&m, "input gain", k_idx)?;
    let innov = y_window - &ext.c_ext * &x_pred;
    let p_stack_hat = &m * &innov;
    let p_hat = p_stack_hat.rows(0, l).clone_owned();
    let p_p = p_stack.view((0, 0), (l, l)).clone_owned();

    // State estimation.
    let v_gain = b * m.rows(0, l);
    let mut w_map = -(&v_gain * &ext.h_breve);
    {
        let mut lead = w_map.view_mut((0, 0), (n, n));
        lead += DMatrix::<f64>::identity(n, n);
    }
    let a_breve = a - &v_gain * &ext.c_ext_a;
    let pi = ErrorMap {
        x: a_breve.clone(),
        w: w_map.clone(),
        v: -&v_gain,
    };
    let theta = &ext.d_ext * &m;
    let omega = ErrorMap {
        x: &ext.c_ext * &a_breve - &theta * &ext.c_ext_a,
        w: &ext.c_ext * &w_map - &theta * &ext.h_breve + &ext.h_ext,
        v: -(&ext.c_ext * &v_gain) - &theta + &eye_v,
    };
    let upsilon = -quad(state, q, r, &omega, &pi);
    let phi = symmetrize(&quad(state, q, r, &omega, &omega));
    check(&phi, "residual covariance", k_idx)?;
    let k = linalg::range_restricted_gain(&(-upsilon.transpose()), &phi, tol.range, s.diagonal().amax())
        .ok_or(Error::Divergence { step: "state gain", index: k_idx })?;
    let x_prior = &x_pred + b * &p_hat;
    let residual = y_window - &ext.c_ext * &x_prior - &ext.d_ext * &p_stack_hat;
    let x_post = &x_prior + &k * &residual;
    if !linalg::all_finite_vec(&x_post) {
        return Err(Error::Divergence { step: "state update", index: k_idx });
    }

    // Posterior error map, then the cross-covariances with the noise of the
    // next window, which overlaps this one in all but its newest block.
    let t = DMatrix::<f64>::identity(n, n) - &k * &ext.c_ext;
    let k_theta = &k * &theta;
    let w_err = &t * &w_map + &k_theta * &ext.h_breve - &k * &ext.h_ext;
    let v_err = -(&t * &v_gain) + &k_theta - &k;
    let a_err = &t * &a_breve + &k_theta * &ext.c_ext_a;
    // P^cal + K Upsilon + Upsilon^T K^T + K Phi K^T, evaluated through the
    // posterior error map so that it stays PSD.
    let post_map = ErrorMap {
        x: a_err.clone(),
        w: w_err.clone(),
        v: v_err.clone(),
    };
    let p_post = symmetrize(&quad(state, q, r, &post_map, &post_map));
    check(&p_post, "posterior covariance", k_idx)?;
    let mut p_xw = DMatrix::zeros(n, nw * n);
    let mut p_xv = DMatrix::zeros(n, nv);
    for j in 0..ext.window {
        let blk = &a_err * state.p_xw.columns((j + 1) * n, n) + w_err.columns((j + 1) * n, n) * q;
        p_xw.columns_mut(j * n, n).copy_from(&blk);
        let blk = &a_err * state.p_xv.columns((j + 1) * qn, qn) + v_err.columns((j + 1) * qn, qn) * r;
        p_xv.columns_mut(j * qn, qn).copy_from(&blk);
    }
    check(&p_xw, "process cross-covariance", k_idx)?;
    check(&p_xv, "measurement cross-covariance", k_idx)?;

    let next = SmootherState {
        x_hat: x_post.clone(),
        p: p_post.clone(),
        p_xw,
        p_xv,
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
        residual_covariance: phi,
    };
    Ok((next, result))
}

/// Stateful wrapper around [`us_step`]. The stacked matrices depend only on
/// the system, so candidates in a filter array share one copy.
#[derive(Debug, Clone)]
pub struct UniversalSmoother {
    pub dss: DiscreteStateSpace,
    pub ext: std::sync::Arc<ExtendedMatrices>,
    pub state: SmootherState,
    pub tol: Tolerances,
}

impl UniversalSmoother {
    pub fn new(dss: DiscreteStateSpace, window: usize, p0: f64) -> Result<Self> {
        let ext = std::sync::Arc::new(build_extended_matrices(&dss, window)?);
        let state = SmootherState::initial(&dss, window, p0);
        Ok(Self {
            dss,
            ext,
            state,
            tol: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn window(&self) -> usize {
        self.ext.window
    }
}

impl JointEstimator for UniversalSmoother {
    fn lookahead(&self) -> usize {
        self.ext.window
    }

    fn step(&mut self, data: &MeasurementSet, k: usize) -> Result<StepResult> {
        let y = measurement_window(data, k, self.ext.window)?;
        let mut prev = self.state.clone();
        prev.step_index = k.saturating_sub(1);
        let (next, result) = us_step(&self.dss, &self.ext, &prev, &y, &self.tol)?;
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
    use crate::estimators::uf::{uf_step, FilterState};
    use approx::assert_relative_eq;

    fn two_state() -> DiscreteStateSpace {
        let a = DMatrix::from_row_slice(2, 2, &[0.95, 0.1, -0.3, 0.9]);
        let b = DMatrix::from_row_slice(2, 1, &[0.05, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.2, 0.5]);
        let d = DMatrix::from_row_slice(2, 1, &[0.0, 0.3]);
        DiscreteStateSpace::new(
            a,
            b,
            c,
            d,
            0.01,
            DMatrix::identity(2, 2) * 1e-3,
            DMatrix::identity(2, 2) * 1e-2,
        )
        .unwrap()
    }

    #[test]
    fn extended_matrices_for_window_one() {
        let dss = two_state();
        let ext = build_extended_matrices(&dss, 1).unwrap();
        let (a, b, c, d) = (dss.a(), dss.b(), dss.c(), dss.d());
        assert_relative_eq!(ext.c_ext.rows(2, 2).clone_owned(), c * a, epsilon = 1e-15);
        assert_relative_eq!(ext.d_ext.view((0, 0), (2, 1)).clone_owned(), d.clone(), epsilon = 1e-15);
        assert_eq!(ext.d_ext.view((2, 0), (2, 1)).clone_owned(), DMatrix::zeros(2, 1));
        assert_relative_eq!(ext.d_ext.view((2, 1), (2, 1)).clone_owned(), c * b + d, epsilon = 1e-15);
        assert_eq!(ext.h_ext.view((0, 0), (4, 2)).clone_owned(), DMatrix::zeros(4, 2));
        assert_relative_eq!(ext.h_ext.view((2, 2), (2, 2)).clone_owned(), c.clone(), epsilon = 1e-15);
        assert_relative_eq!(ext.q_kk1.view((2, 0), (2, 2)).clone_owned(), dss.q().clone(), epsilon = 1e-15);
    }

    #[test]
    fn blockwise_products_match_dense_lambda() {
        let dss = two_state();
        let ext = build_extended_matrices(&dss, 2).unwrap();
        let mut st = SmootherState::initial(&dss, 2, 0.3);
        st.p_xw = DMatrix::from_fn(2, 6, |i, j| 0.01 * (i as f64 + 1.0) * (j as f64 - 2.0));
        st.p_xv = DMatrix::from_fn(2, 6, |i, j| 0.002 * (i as f64 - j as f64));
        let lam = st.lambda(&dss);
        let sigma = ErrorMap {
            x: ext.c_ext_a.clone(),
            w: ext.h_breve.clone(),
            v: DMatrix::identity(6, 6),
        };
        let mut dense = DMatrix::zeros(6, 2 + 6 + 6);
        set_block(&mut dense, 0, 0, &sigma.x);
        set_block(&mut dense, 0, 2, &sigma.w);
        set_block(&mut dense, 0, 8, &sigma.v);
        let expected = &dense * lam * dense.transpose();
        assert_relative_eq!(quad(&st, dss.q(), dss.r(), &sigma, &sigma), expected, epsilon = 1e-14);
    }

    #[test]
    fn window_zero_reduces_to_the_filter() {
        let dss = two_state();
        let ext = build_extended_matrices(&dss, 0).unwrap();
        let mut fs = FilterState::new(DVector::from_vec(vec![0.1, -0.2]), DMatrix::identity(2, 2) * 0.05);
        let mut ss = SmootherState::initial(&dss, 0, 0.05);
        ss.x_hat = fs.x_hat.clone();
        let tol = Tolerances::default();
        for k in 0..20 {
            let y = DVector::from_vec(vec![(k as f64 * 0.3).sin(), (k as f64 * 0.7).cos()]);
            let (f2, rf) = uf_step(&dss, &fs, &y, &tol).unwrap();
            let (s2, rs) = us_step(&dss, &ext, &ss, &y, &tol).unwrap();
            assert_relative_eq!(rf.input_estimate, rs.input_estimate, epsilon = 1e-10);
            assert_relative_eq!(f2.x_hat, s2.x_hat.clone(), epsilon = 1e-10);
            assert_relative_eq!(f2.p_x, s2.p.clone(), epsilon = 1e-10);
            fs = f2;
            ss = s2;
        }
    }

    #[test]
    fn cross_covariance_update_matches_shift_form() {
        // The blockwise update equals A~ P_xw shift^T + W~ Q_{k,k+1}.
        let dss = two_state();
        let ext = build_extended_matrices(&dss, 2).unwrap();
        let st = SmootherState::initial(&dss, 2, 0.1);
        let y = DVector::from_vec(vec![0.1, 0.2, -0.1, 0.3, 0.0, 0.05]);
        let (s1, _) = us_step(&dss, &ext, &st, &y, &Tolerances::default()).unwrap();
        let (s2, res) = us_step(&dss, &ext, &s1, &(y * 0.5), &Tolerances::default()).unwrap();
        // Rebuild the error maps for the second step densely.
        let n = 2;
        let m = &res.gain_m;
        let v = dss.b() * m.rows(0, 1);
        let mut w = -(&v * &ext.h_breve);
        let mut lead = w.view_mut((0, 0), (n, n));
        lead += DMatrix::<f64>::identity(n, n);
        let a_breve = dss.a() - &v * &ext.c_ext_a;
        let theta = &ext.d_ext * m;
        let k = &res.gain_k;
        let t = DMatrix::<f64>::identity(n, n) - k * &ext.c_ext;
        let w_err = &t * &w + k * &theta * &ext.h_breve - k * &ext.h_ext;
        let a_err = &t * &a_breve + k * &theta * &ext.c_ext_a;
        let expected = a_err * &s1.p_xw * ext.shift_breve_w.transpose() + w_err * &ext.q_kk1;
        assert_relative_eq!(s2.p_xw, expected, epsilon = 1e-13);
    }

    #[test]
    fn end_of_data_is_reported() {
        let data = MeasurementSet::clean(vec![0.0, 0.1, 0.2], DMatrix::zeros(3, 2), vec![0.0, 0.0]);
        let err = measurement_window(&data, 1, 2).unwrap_err();
        assert!(matches!(err, Error::EndOfData { .. }));
    }
}
