//! Helpers for complex Hermitian matrices.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative deviation of `m` from its adjoint.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    (m - m.adjoint()).norm() / (1.0 + m.norm())
}

pub fn check_hermitian(m: &CMat, tol: f64, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let dev = hermitian_deviation(m);
    if dev > tol {
        return Err(Error::NotHermitian(format!(
            "{what}: relative deviation {dev:.3e} exceeds {tol:.1e}"
        )));
    }
    Ok(())
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Principal square root of a Hermitian PSD matrix, with eigenvalues floored at zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let eig = m.clone().symmetric_eigen();
    let d = m.nrows();
    let mut out = CMat::zeros(d, d);
    for k in 0..d {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        if lam == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        for r in 0..d {
            for c in 0..d {
                out[(r, c)] += v[r] * v[c].conj() * Complex64::new(lam, 0.0);
            }
        }
    }
    out
}

pub fn submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

pub fn subvector(v: &CVec, idx: &[usize]) -> CVec {
    CVec::from_fn(idx.len(), |r, _| v[idx[r]])
}

/// Solves `m x = rhs` for Hermitian positive-definite `m` via Cholesky.
pub fn chol_solve(m: &CMat, rhs: &CVec, what: &str) -> Result<CVec> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(chol.solve(rhs))
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn chol_inverse(m: &CMat, what: &str) -> Result<CMat> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(chol.inverse())
}

/// Solves `m X = rhs` with a matrix right-hand side.
pub fn chol_solve_mat(m: &CMat, rhs: &CMat) -> Result<CMat> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("matrix solve".into()))?;
    Ok(chol.solve(rhs))
}
