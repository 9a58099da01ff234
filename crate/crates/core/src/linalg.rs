//! Small dense linear-algebra helpers shared across the crate: sorted
//! symmetric eigendecompositions, SPD solves with iterative refinement, and a
//! deterministic power-iteration spectral norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix, ascending.
pub fn eigenvalues_ascending(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Full symmetric eigendecomposition with eigenvalues ascending and columns of
/// the returned matrix holding the matching eigenvectors.
pub fn sym_eigen_ascending(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Solve `a x = b` for symmetric positive definite `a` by Cholesky, then apply
/// two steps of iterative refinement. The refinement matters when `a` mixes
/// scales (data terms ~1 against penalty terms ~1e9): plain Cholesky loses the
/// small scale, refinement restores it far past the accuracy the callers need.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let mut x = chol.solve(b);
    for _ in 0..2 {
        let r = b - a * &x;
        x += chol.solve(&r);
    }
    Ok(x)
}

/// Largest singular value via 50-round power iteration on mᵀm with a fixed
/// start vector, so repeated calls are bit-identical.
pub fn spectral_norm_power(m: &DMatrix<f64>, iters: usize) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = m.transpose() * m;
    let k = g.nrows();
    // Ramped start avoids being exactly orthogonal to the top eigenvector.
    let mut v = DVector::from_iterator(k, (0..k).map(|i| 1.0 + 1e-3 * i as f64));
    v /= v.norm();
    for _ in 0..iters {
        let gv = &g * &v;
        let norm = gv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = gv / norm;
    }
    let rayleigh = (v.transpose() * &g * &v)[(0, 0)];
    rayleigh.max(0.0).sqrt()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
