//! Structural models and their state-space forms.
//!
//! The chain is physical (`M, C, K, S`) -> modal-reduced -> continuous
//! first-order -> zero-order-hold discrete. Sensor channels are defined at
//! physical degrees of freedom; the output matrices compose the modal-to-
//! physical map with the channel selection.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, set_block};

/// Damping specification for a shear frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Damping {
    /// One ratio per mode (ascending frequency), or a single ratio applied to all.
    ModalRatios(Vec<f64>),
    /// `C = alpha * M + beta * K`.
    Rayleigh { alpha: f64, beta: f64 },
}

/// How the external inputs enter the equation of motion.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDefinition {
    /// A single ground acceleration input; `S = -M i` with `i` all ones.
    GroundMotion,
    /// Point forces acting on the listed 0-based DOFs, in column order.
    PointForces(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct StructuralModel {
    pub mass_matrix: DMatrix<f64>,
    pub damping_matrix: DMatrix<f64>,
    pub stiffness_matrix: DMatrix<f64>,
    pub input_distribution: DMatrix<f64>,
    pub n_dof: usize,
    pub n_inputs: usize,
}

/// Mass-normalized undamped modes, ascending in frequency.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    /// Natural circular frequencies (rad/s).
    pub omegas: DVector<f64>,
    /// `n_s x n_s`, one mode per column, `Phi^T M Phi = I`.
    pub shapes: DMatrix<f64>,
}

impl ModalBasis {
    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.omegas
            .iter()
            .map(|w| w / (2.0 * std::f64::consts::PI))
            .collect()
    }
}

impl StructuralModel {
    pub fn new(
        mass_matrix: DMatrix<f64>,
        damping_matrix: DMatrix<f64>,
        stiffness_matrix: DMatrix<f64>,
        input_distribution: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mass_matrix.nrows();
        for (name, m) in [
            ("mass", &mass_matrix),
            ("damping", &damping_matrix),
            ("stiffness", &stiffness_matrix),
        ] {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!("{name} matrix must be {n}x{n}")));
            }
        }
        if input_distribution.nrows() != n {
            return Err(Error::Dimension(format!(
                "input distribution must have {n} rows"
            )));
        }
        for (name, m) in [("mass", &mass_matrix), ("stiffness", &stiffness_matrix)] {
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if linalg::symmetry_defect(m) > 1e-12 * scale {
                return Err(Error::InvalidParameter(format!("{name} matrix is not symmetric")));
            }
        }
        if mass_matrix.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter(
                "mass matrix is not positive definite".into(),
            ));
        }
        let n_inputs = input_distribution.ncols();
        Ok(Self {
            mass_matrix,
            damping_matrix,
            stiffness_matrix,
            input_distribution,
            n_dof: n,
            n_inputs,
        })
    }

    /// Generalized eigenproblem `K phi = w^2 M phi`, mass-normalized.
    pub fn modal_analysis(&self) -> Result<ModalBasis> {
        modal_basis(&self.mass_matrix, &self.stiffness_matrix)
    }

    /// Replaces the input distribution.
    pub fn with_inputs(mut self, inputs: &InputDefinition) -> Result<Self> {
        self.input_distribution = input_matrix(&self.mass_matrix, inputs)?;
        self.n_inputs = self.input_distribution.ncols();
        Ok(self)
    }
}

fn modal_basis(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> Result<ModalBasis> {
    let n = mass.nrows();
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix Cholesky factorization".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("inverse of Cholesky factor".into()))?;
    let sym = linalg::symmetrize(&(&l_inv * stiffness * l_inv.transpose()));
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("generalized eigensolve did not converge".into()))?;
    let raw_shapes = l_inv.transpose() * &eig.eigenvectors;

    let dominant = |col: usize| -> usize {
        raw_shapes
            .column(col)
            .iamax()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| dominant(a).cmp(&dominant(b)))
    });

    let mut omegas = DVector::zeros(n);
    let mut shapes = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let lam = eig.eigenvalues[src];
        if !lam.is_finite() || lam < -1e-9 * eig.eigenvalues.amax() {
            return Err(Error::Numerical(format!("negative modal stiffness {lam}")));
        }
        omegas[dst] = lam.max(0.0).sqrt();
        let mut v = raw_shapes.column(src).clone_owned();
        let scale = v.amax();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12 * scale) {
            if first < 0.0 {
                v.neg_mut();
            }
        }
        shapes.set_column(dst, &v);
    }
    Ok(ModalBasis { omegas, shapes })
}

fn input_matrix(mass: &DMatrix<f64>, inputs: &InputDefinition) -> Result<DMatrix<f64>> {
    let n = mass.nrows();
    match inputs {
        InputDefinition::GroundMotion => {
            let ones = DVector::from_element(n, 1.0);
            Ok(DMatrix::from_column_slice(n, 1, (-(mass * ones)).as_slice()))
        }
        InputDefinition::PointForces(dofs) => {
            let mut s = DMatrix::zeros(n, dofs.len());
            for (col, &dof) in dofs.iter().enumerate() {
                if dof >= n {
                    return Err(Error::InvalidParameter(format!(
                        "force DOF {dof} out of range for {n} DOFs"
                    )));
                }
                s[(dof, col)] = 1.0;
            }
            Ok(s)
        }
    }
}

/// Builds a fixed-base shear building. Storey `i` couples floor `i` to the
/// floor below (the ground for `i = 0`).
pub fn build_shear_frame(
    storey_masses: &[f64],
    storey_stiffnesses: &[f64],
    damping: &Damping,
    inputs: &InputDefinition,
) -> Result<StructuralModel> {
    let n = storey_masses.len();
    if n == 0 || storey_stiffnesses.len() != n {
        return Err(Error::InvalidParameter(
            "storey masses and stiffnesses must be non-empty and of equal length".into(),
        ));
    }
    if let Some(m) = storey_masses.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-positive storey mass {m}")));
    }
    if let Some(k) = storey_stiffnesses
        .iter()
        .find(|k| !(**k > 0.0) || !k.is_finite())
    {
        return Err(Error::InvalidParameter(format!("non-positive storey stiffness {k}")));
    }

    let mass = DMatrix::from_diagonal(&DVector::from_column_slice(storey_masses));
    let mut stiffness = DMatrix::zeros(n, n);
    for i in 0..n {
        stiffness[(i, i)] += storey_stiffnesses[i];
        if i + 1 < n {
            let k_above = storey_stiffnesses[i + 1];
            stiffness[(i, i)] += k_above;
            stiffness[(i, i + 1)] -= k_above;
            stiffness[(i + 1, i)] -= k_above;
        }
    }

    let damping_matrix = match damping {
        Damping::Rayleigh { alpha, beta } => &mass * *alpha + &stiffness * *beta,
        Damping::ModalRatios(ratios) => {
            let ratios: Vec<f64> = match ratios.len() {
                1 => vec![ratios[0]; n],
                len if len == n => ratios.clone(),
                len => {
                    return Err(Error::InvalidParameter(format!(
                        "expected 1 or {n} modal damping ratios, got {len}"
                    )))
                }
            };
            if ratios.iter().any(|z| *z < 0.0 || !z.is_finite()) {
                return Err(Error::InvalidParameter("negative damping ratio".into()));
            }
            let basis = modal_basis(&mass, &stiffness)?;
            let diag = DVector::from_iterator(
                n,
                ratios.iter().zip(basis.omegas.iter()).map(|(z, w)| 2.0 * z * w),
            );
            let m_phi = &mass * &basis.shapes;
            linalg::symmetrize(&(&m_phi * DMatrix::from_diagonal(&diag) * m_phi.transpose()))
        }
    };

    let s = input_matrix(&mass, inputs)?;
    StructuralModel::new(mass, damping_matrix, stiffness, s)
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub modal_matrix: DMatrix<f64>,
    pub reduced_mass: DMatrix<f64>,
    pub reduced_damping: DMatrix<f64>,
    pub reduced_stiffness: DMatrix<f64>,
    pub reduced_input: DMatrix<f64>,
    pub order: usize,
    /// Natural circular frequencies of the retained modes.
    pub omegas: DVector<f64>,
}

/// Projects the model onto its `n_r` lowest mass-normalized modes.
pub fn modal_reduce(model: &StructuralModel, n_r: usize) -> Result<ReducedModel> {
    if n_r == 0 || n_r > model.n_dof {
        return Err(Error::InvalidParameter(format!(
            "reduced order {n_r} must be in 1..={}",
            model.n_dof
        )));
    }
    let basis = model.modal_analysis()?;
    let phi = basis.shapes.columns(0, n_r).clone_owned();
    let phi_t = phi.transpose();
    Ok(ReducedModel {
        reduced_mass: linalg::symmetrize(&(&phi_t * &model.mass_matrix * &phi)),
        reduced_damping: &phi_t * &model.damping_matrix * &phi,
        reduced_stiffness: linalg::symmetrize(&(&phi_t * &model.stiffness_matrix * &phi)),
        reduced_input: &phi_t * &model.input_distribution,
        omegas: basis.omegas.rows(0, n_r).clone_owned(),
        modal_matrix: phi,
        order: n_r,
    })
}

/// First-order form `x' = A x + B p` with `x = [q; q']`.
#[derive(Debug, Clone)]
pub struct ContinuousStateSpace {
    pub state_matrix: DMatrix<f64>,
    pub input_matrix: DMatrix<f64>,
}

pub fn assemble_continuous(reduced: &ReducedModel) -> Result<ContinuousStateSpace> {
    let n = reduced.order;
    let l = reduced.reduced_input.ncols();
    let m_inv = reduced
        .reduced_mass
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("reduced mass matrix is singular".into()))?;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    set_block(&mut a, 0, n, &DMatrix::identity(n, n));
    set_block(&mut a, n, 0, &(-(&m_inv * &reduced.reduced_stiffness)));
    set_block(&mut a, n, n, &(-(&m_inv * &reduced.reduced_damping)));
    let mut b = DMatrix::zeros(2 * n, l);
    set_block(&mut b, n, 0, &(&m_inv * &reduced.reduced_input));
    Ok(ContinuousStateSpace {
        state_matrix: a,
        input_matrix: b,
    })
}

/// Zero-order-hold discretization: `A = exp(A_c dt)`,
/// `B = (A - I) A_c^{-1} B_c`.
///
/// When `A_c` is numerically singular the input matrix is taken from the
/// block exponential of `[[A_c, B_c], [0, 0]] dt`, whose upper-right block is
/// the series `sum_j A_c^{j-1} dt^j / j! B_c`.
pub fn discretize(css: &ContinuousStateSpace, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("timestep must be positive, got {dt}")));
    }
    let ac = &css.state_matrix;
    let bc = &css.input_matrix;
    let n = ac.nrows();
    if ac.ncols() != n || bc.nrows() != n {
        return Err(Error::Dimension("continuous state/input matrices".into()));
    }
    let a = linalg::expm(&(ac * dt));

    let sv = ac.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let regular = n > 0 && smax > 0.0 && smin > 1e-12 * smax;

    let b = if regular {
        let lu = ac.clone().lu();
        let solved = lu
            .solve(bc)
            .ok_or_else(|| Error::Numerical("continuous state matrix solve".into()))?;
        (&a - DMatrix::identity(n, n)) * solved
    } else {
        let l = bc.ncols();
        let mut aug = DMatrix::zeros(n + l, n + l);
        set_block(&mut aug, 0, 0, &(ac * dt));
        set_block(&mut aug, 0, n, &(bc * dt));
        let e = linalg::expm(&aug);
        e.view((0, n), (n, l)).clone_owned()
    };
    if !linalg::all_finite(&a) || !linalg::all_finite(&b) {
        return Err(Error::Numerical("discretization produced non-finite entries".into()));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    Displacement,
    Velocity,
    Acceleration,
}

impl SensorKind {
    pub fn prefix(self) -> &'static str {
        match self {
            SensorKind::Displacement => "d",
            SensorKind::Velocity => "v",
            SensorKind::Acceleration => "a",
        }
    }
}

/// One measured channel at a physical DOF (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Channel {
    pub kind: SensorKind,
    pub dof: usize,
}

impl Channel {
    pub fn new(kind: SensorKind, dof: usize) -> Self {
        Self { kind, dof }
    }
}

impl fmt::Display for Channel {
    /// Column name with a 1-based floor number, e.g. `a4`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.dof + 1)
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad channel name `{s}`"));
        let (kind, rest) = match s.chars().next() {
            Some('d') => (SensorKind::Displacement, &s[1..]),
            Some('v') => (SensorKind::Velocity, &s[1..]),
            Some('a') => (SensorKind::Acceleration, &s[1..]),
            _ => return Err(bad()),
        };
        let floor: usize = rest.parse().map_err(|_| bad())?;
        if floor == 0 {
            return Err(bad());
        }
        Ok(Channel::new(kind, floor - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorLayout {
    pub channels: Vec<Channel>,
}

impl SensorLayout {
    pub fn new(channels: Vec<Channel>) -> Self {
        Self { channels }
    }

    /// Parses names like `["d1", "a2", "a4"]`.
    pub fn parse<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let channels = names
            .iter()
            .map(|n| n.as_ref().parse())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.to_string()).collect()
    }

    pub fn validate(&self, n_dof: usize) -> Result<()> {
        for (i, c) in self.channels.iter().enumerate() {
            if c.dof >= n_dof {
                return Err(Error::InvalidParameter(format!(
                    "channel {i} (`{c}`) refers to floor {} but the model has {n_dof}",
                    c.dof + 1
                )));
            }
        }
        Ok(())
    }
}

/// Output and feedforward matrices for a sensor layout.
///
/// Displacement and velocity rows read `Phi q` and `Phi q'`; acceleration
/// rows read `Phi q''` with `q''` eliminated through the reduced equation
/// of motion, which is where the direct feedthrough `D` comes from.
pub fn output_matrices(
    reduced: &ReducedModel,
    layout: &SensorLayout,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_s = reduced.modal_matrix.nrows();
    layout.validate(n_s)?;
    let n = reduced.order;
    let l = reduced.reduced_input.ncols();
    let m_inv = reduced
        .reduced_mass
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("reduced mass matrix is singular".into()))?;
    let acc_disp = -(&m_inv * &reduced.reduced_stiffness);
    let acc_vel = -(&m_inv * &reduced.reduced_damping);
    let acc_input = &m_inv * &reduced.reduced_input;

    let q = layout.len();
    let mut c = DMatrix::zeros(q, 2 * n);
    let mut d = DMatrix::zeros(q, l);
    for (row, ch) in layout.channels.iter().enumerate() {
        let phi_row = reduced.modal_matrix.row(ch.dof);
        match ch.kind {
            SensorKind::Displacement => c.view_mut((row, 0), (1, n)).copy_from(&phi_row),
            SensorKind::Velocity => c.view_mut((row, n), (1, n)).copy_from(&phi_row),
            SensorKind::Acceleration => {
                c.view_mut((row, 0), (1, n)).copy_from(&(phi_row * &acc_disp));
                c.view_mut((row, n), (1, n)).copy_from(&(phi_row * &acc_vel));
                d.row_mut(row).copy_from(&(phi_row * &acc_input));
            }
        }
    }
    Ok((c, d))
}

/// Discrete model consumed by every estimator:
/// `x_k = A x_{k-1} + B p_k + w_{k-1}`, `y_k = C x_k + D p_k + v_k`.
///
/// `G = C B + D` is derived on construction and whenever `B`, `C` or `D`
/// would change, so it never drifts from its definition.
#[derive(Debug, Clone)]
pub struct DiscreteStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    g: DMatrix<f64>,
    dt: f64,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl DiscreteStateSpace {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        dt: f64,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let l = b.ncols();
        let m = c.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.shape() != (m, l) {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, D {:?} are inconsistent",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let q = check_covariance("Q", q, n, false)?;
        let r = check_covariance("R", r, m, true)?;
        let g = &c * &b + &d;
        Ok(Self { a, b, c, d, g, dt, q, r })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_q(&self, q: DMatrix<f64>) -> Result<Self> {
        let q = check_covariance("Q", q, self.n_states(), false)?;
        Ok(Self { q, ..self.clone() })
    }

    /// `Q = scale * I`.
    pub fn with_q_scalar(&self, scale: f64) -> Result<Self> {
        self.with_q(DMatrix::identity(self.n_states(), self.n_states()) * scale)
    }

    pub fn with_r(&self, r: DMatrix<f64>) -> Result<Self> {
        let r = check_covariance("R", r, self.n_outputs(), true)?;
        Ok(Self { r, ..self.clone() })
    }
}

fn check_covariance(name: &str, m: DMatrix<f64>, dim: usize, definite: bool) -> Result<DMatrix<f64>> {
    if m.shape() != (dim, dim) {
        return Err(Error::Dimension(format!("{name} must be {dim}x{dim}, got {:?}", m.shape())));
    }
    if !linalg::all_finite(&m) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if linalg::symmetry_defect(&m) > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    let m = linalg::symmetrize(&m);
    if dim > 0 {
        let min_eig = linalg::min_eigenvalue(&m);
        if definite && !(min_eig > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive definite")));
        }
        if min_eig < -1e-12 * scale {
            return Err(Error::InvalidParameter(format!("{name} must be positive semidefinite")));
        }
    }
    Ok(m)
}

/// `G = C B + D`.
pub fn assemble_error_matrix(dss: &DiscreteStateSpace) -> DMatrix<f64> {
    dss.c() * dss.b() + dss.d()
}

/// A structure, its reduction, a sensor layout and the resulting discrete
/// model, kept together so estimates can be mapped back to floors.
#[derive(Debug, Clone)]
pub struct StructuralSystem {
    pub structure: StructuralModel,
    pub reduced: ReducedModel,
    pub layout: SensorLayout,
    pub dss: DiscreteStateSpace,
}

impl StructuralSystem {
    /// Full chain from physical matrices to a discrete model with the given
    /// noise covariances.
    pub fn assemble(
        structure: StructuralModel,
        n_r: usize,
        layout: SensorLayout,
        dt: f64,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let reduced = modal_reduce(&structure, n_r)?;
        let css = assemble_continuous(&reduced)?;
        let (a, b) = discretize(&css, dt)?;
        let (c, d) = output_matrices(&reduced, &layout)?;
        let dss = DiscreteStateSpace::new(a, b, c, d, dt, q, r)?;
        Ok(Self {
            structure,
            reduced,
            layout,
            dss,
        })
    }

    /// Same structure and reduction, different sensors. Keeps Q; R must be
    /// supplied for the new channel count.
    pub fn with_layout(&self, layout: SensorLayout, r: DMatrix<f64>) -> Result<Self> {
        let (c, d) = output_matrices(&self.reduced, &layout)?;
        let dss = DiscreteStateSpace::new(
            self.dss.a().clone(),
            self.dss.b().clone(),
            c,
            d,
            self.dss.dt(),
            self.dss.q().clone(),
            r,
        )?;
        Ok(Self {
            layout,
            dss,
            ..self.clone()
        })
    }

    /// Physical displacement and velocity from a modal state `[q; q']`.
    pub fn physical_from_state(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.reduced.order;
        let phi = &self.reduced.modal_matrix;
        (phi * x.rows(0, n), phi * x.rows(n, n))
    }

    pub fn n_states(&self) -> usize {
        self.dss.n_states()
    }
}
