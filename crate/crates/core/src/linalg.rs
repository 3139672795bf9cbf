//! Dense helpers shared by the filters: weighted rank-W updates, products
//! that skip zero coordinates, and thin wrappers over nalgebra solvers.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// `a += Σ_j d_j x_j x_j'` over the rows `x_j` of `x`.
pub fn add_weighted_gram(a: &mut Array2<f64>, x: ArrayView2<f64>, d: ArrayView1<f64>) {
    for (row, &dj) in x.outer_iter().zip(d.iter()) {
        if dj == 0.0 {
            continue;
        }
        for (i, &xi) in row.iter().enumerate() {
            let c = dj * xi;
            if c != 0.0 {
                a.row_mut(i).scaled_add(c, &row);
            }
        }
    }
}

/// `a += scale · v v'`.
pub fn add_outer(a: &mut Array2<f64>, v: ArrayView1<f64>, scale: f64) {
    for (i, &vi) in v.iter().enumerate() {
        let c = scale * vi;
        if c != 0.0 {
            a.row_mut(i).scaled_add(c, &v);
        }
    }
}

/// `a · w` for symmetric `a`, touching only the nonzero entries of `w`.
pub fn sym_matvec_sparse(a: &Array2<f64>, w: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(a.nrows());
    for (j, &wj) in w.iter().enumerate() {
        if wj != 0.0 {
            out.scaled_add(wj, &a.row(j));
        }
    }
    out
}

/// Replaces `a` with `(a + a') / 2`.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_array2(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let chol = to_dmatrix(a)
        .cholesky()
        .ok_or_else(|| Error::Degenerate("matrix is not positive definite".into()))?;
    let x = chol.solve(&DVector::from_iterator(b.len(), b.iter().copied()));
    Ok(Array1::from_iter(x.iter().copied()))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let chol = to_dmatrix(a)
        .cholesky()
        .ok_or_else(|| Error::Degenerate("matrix is not positive definite".into()))?;
    Ok(to_array2(&chol.inverse()))
}

pub fn is_positive_definite(a: ArrayView2<f64>) -> bool {
    to_dmatrix(a).cholesky().is_some()
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn largest_eigenvalue(a: ArrayView2<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.01 * (i as f64 + 1.0).sin());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let av = a.dot(&v);
        lambda = v.dot(&av);
        v = av;
    }
    lambda
}
