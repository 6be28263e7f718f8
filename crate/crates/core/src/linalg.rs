//! Dense linear-algebra helpers shared by the estimators.
//!
//! Everything here works on `nalgebra` dynamic matrices. Rank decisions are
//! always relative to the largest singular value of the operand.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Default relative truncation for pseudoinverses and range bases.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Largest absolute entry of `a - a^T`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part of `a`. Empty matrices report 0.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Moore-Penrose inverse with singular values below `rel_tol * sigma_max`
/// treated as zero.
pub fn pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 || !sigma_max.is_finite() {
        return DMatrix::zeros(c, r);
    }
    let cutoff = rel_tol * sigma_max;
    let u = svd.u.as_ref().expect("svd u");
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out += (vi * ui.transpose()) / s;
        }
    }
    out
}

/// Pseudoinverse of a symmetric matrix through its eigendecomposition.
pub fn sym_pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lam_max == 0.0 || !lam_max.is_finite() {
        return DMatrix::zeros(n, n);
    }
    let cutoff = rel_tol * lam_max;
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > cutoff {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / lam;
        }
    }
    out
}

/// Pseudoinverse of a symmetric positive semidefinite matrix. Eigenvalues at
/// or below `rel_tol * lambda_max` (including round-off negatives) are
/// treated as zero, so the result is itself PSD.
pub fn psd_pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if lam_max <= 0.0 || !lam_max.is_finite() {
        return DMatrix::zeros(n, n);
    }
    let cutoff = rel_tol * lam_max;
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / lam;
        }
    }
    symmetrize(&out)
}

/// Minimum-variance weighted least squares for `y = G p + e`, `cov(e) = S`.
///
/// Returns the gain `M = (G^T S^+ G)^+ G^T S^+` and the estimate covariance
/// `(G^T S^+ G)^+`, both pseudoinverses truncated at `rel_tol`.
pub fn weighted_least_squares(
    g: &DMatrix<f64>,
    s: &DMatrix<f64>,
    rel_tol: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let s_pinv = psd_pinv(s, rel_tol);
    let gt_w = g.transpose() * &s_pinv;
    let cov = psd_pinv(&(&gt_w * g), rel_tol);
    let gain = &cov * gt_w;
    (gain, cov)
}

/// Orthonormal basis of the column space of a symmetric matrix.
///
/// Columns are ordered by descending singular value and each column's first
/// non-negligible entry is made positive. Rank is the number of singular
/// values above `rel_tol * sigma_max`; a zero matrix yields a basis with no
/// columns.
pub fn range_basis(s: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    range_basis_scaled(s, rel_tol, 0.0)
}

/// Like [`range_basis`], but eigenvalues are compared against
/// `rel_tol * max(sigma_max, scale)`. A matrix that is pure round-off next to
/// `scale` then has an empty range.
pub fn range_basis_scaled(s: &DMatrix<f64>, rel_tol: f64, scale: f64) -> DMatrix<f64> {
    let n = s.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(s));
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the decomposition's own order on exact ties.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma_max = order
        .first()
        .map(|&i| eig.eigenvalues[i].abs())
        .unwrap_or(0.0);
    if sigma_max == 0.0 || !sigma_max.is_finite() {
        return DMatrix::zeros(n, 0);
    }
    let cutoff = rel_tol * sigma_max.max(scale);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i].abs() > cutoff)
        .collect();
    let mut basis = DMatrix::zeros(n, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                v.neg_mut();
            }
        }
        basis.set_column(col, &v);
    }
    basis
}

/// Gain of the form `L * U (U^T S U)^{-1} U^T`, where `U` spans the range of
/// the symmetric matrix `s` as decided by [`range_basis_scaled`]. Returns
/// zeros when `s` has rank zero.
pub fn range_restricted_gain(
    left: &DMatrix<f64>,
    s: &DMatrix<f64>,
    rel_tol: f64,
    scale: f64,
) -> Option<DMatrix<f64>> {
    let u = range_basis_scaled(s, rel_tol, scale);
    if u.ncols() == 0 {
        return Some(DMatrix::zeros(left.nrows(), s.nrows()));
    }
    let reduced = u.transpose() * s * &u;
    let inv = spd_inverse(&reduced).or_else(|| reduced.clone().try_inverse())?;
    Some(left * &u * inv * u.transpose())
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = symmetrize(a).cholesky()?;
    Some(chol.inverse())
}

/// Matrix exponential (scaling and squaring with a Pade approximant).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Copies `block` into `dst` with its top-left corner at `(row, col)`.
pub(crate) fn set_block(dst: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    dst.view_mut((row, col), block.shape()).copy_from(block);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn range_basis_of_zero_is_empty() {
        let u = range_basis(&DMatrix::zeros(3, 3), 1e-12);
        assert_eq!(u.shape(), (3, 0));
    }

    #[test]
    fn range_basis_of_identity_is_orthonormal() {
        let u = range_basis(&DMatrix::identity(3, 3), 1e-12);
        assert_eq!(u.ncols(), 3);
        assert_relative_eq!(u.transpose() * &u, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn range_basis_drops_tiny_direction() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-20]));
        let u = range_basis(&s, 1e-12);
        assert_eq!(u.ncols(), 1);
        assert_relative_eq!(u[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(u[(1, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn range_basis_sign_convention() {
        let v = DVector::from_vec(vec![-1.0, 2.0]).normalize();
        let s = &v * v.transpose();
        let u = range_basis(&s, 1e-12);
        assert_eq!(u.ncols(), 1);
        assert!(u[(0, 0)] > 0.0);
    }

    #[test]
    fn round_off_is_rankless_next_to_scale() {
        let s = DMatrix::identity(2, 2) * 1e-18;
        assert_eq!(range_basis(&s, 1e-10).ncols(), 2);
        assert_eq!(range_basis_scaled(&s, 1e-10, 1.0).ncols(), 0);
    }

    #[test]
    fn zero_rank_gain_is_zero() {
        let left = DMatrix::from_element(2, 3, 1.0);
        let k = range_restricted_gain(&left, &DMatrix::zeros(3, 3), 1e-10, 0.0).unwrap();
        assert_eq!(k, DMatrix::zeros(2, 3));
    }

    #[test]
    fn psd_pinv_drops_negative_round_off() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1e-3]));
        let p = psd_pinv(&s, 1e-10);
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn weighted_least_squares_matches_normal_equations() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 2.0, -1.0, 0.3]);
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let s_inv = s.clone().try_inverse().unwrap();
        let cov = (g.transpose() * &s_inv * &g).try_inverse().unwrap();
        let gain = &cov * g.transpose() * &s_inv;
        let (m, p) = weighted_least_squares(&g, &s, 1e-12);
        assert_relative_eq!(m, gain, epsilon = 1e-12);
        assert_relative_eq!(p, cov, epsilon = 1e-12);
    }

    #[test]
    fn pinv_matches_inverse_when_regular() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 2.0, 3.0]);
        let inv = a.clone().try_inverse().unwrap();
        assert_relative_eq!(pinv(&a, 1e-12), inv, epsilon = 1e-13);
    }

    #[test]
    fn pinv_of_rank_one_satisfies_penrose() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = pinv(&a, 1e-12);
        assert_relative_eq!(&a * &p * &a, a, epsilon = 1e-12);
        assert_relative_eq!(&p * &a * &p, p, epsilon = 1e-12);
    }
}
