//! Small dense helpers shared by the synthesis and certification code.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-8;
/// Absolute eigenvalue slack for PSD tests.
pub const PSD_TOL: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Numerical rank with singular values below `RANK_TOL · σ_max` treated as zero.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * smax).count()
}

/// Moore-Penrose pseudoinverse.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOL * smax;
    svd.pseudo_inverse(tol).unwrap_or_else(|_| DMatrix::zeros(c, r))
}

/// Minimum-Frobenius-norm solution of `a x = b`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    pinv(a) * b
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_symmetric_eigenvalue(m) >= -tol
}

/// `M^{-1/2}` of a symmetric positive-definite matrix; `None` otherwise.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Vertical concatenation `[top; bottom]`.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    m
}
