//! Thin wrappers around nalgebra for symmetric eigendecomposition and SPD
//! solves on ndarray storage.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

fn to_dmatrix(m: &Array2<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    Ok(DMatrix::from_row_iterator(m.nrows(), m.ncols(), m.iter().copied()))
}

pub(crate) fn symmetric_eigenvalues(m: &Array2<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(to_dmatrix(m)?);
    Ok(eig.eigenvalues.iter().copied().collect())
}

/// Eigenvalues plus eigenvectors (as matrix columns) of a symmetric matrix.
pub(crate) fn symmetric_eigen(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(to_dmatrix(m)?);
    let values = eig.eigenvalues.iter().copied().collect();
    let mut vectors = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            vectors[[i, j]] = eig.eigenvectors[(i, j)];
        }
    }
    Ok((values, vectors))
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub(crate) fn spd_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "spd_solve: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let chol = Cholesky::new(to_dmatrix(a)?).ok_or_else(|| {
        Error::Numeric("matrix is not positive definite".into())
    })?;
    let rhs = to_dmatrix(b)?;
    let x = chol.solve(&rhs);
    let mut out = Array2::zeros((b.nrows(), b.ncols()));
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            out[[i, j]] = x[(i, j)];
        }
    }
    Ok(out)
}
