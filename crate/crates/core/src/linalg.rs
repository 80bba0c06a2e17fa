//! Small dense helpers that nalgebra does not provide directly.

use nalgebra::{DMatrix, DVector};

/// Orthonormal bases of `span(rows)` and of its orthogonal complement in R^n.
///
/// Modified Gram-Schmidt with one reorthogonalization pass; a candidate whose
/// residual falls below `tol` times its original norm is treated as dependent.
pub(crate) fn range_and_null(rows: &[DVector<f64>], n: usize, tol: f64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut range: Vec<DVector<f64>> = Vec::with_capacity(rows.len().min(n));
    for r in rows {
        if let Some(q) = orthogonalize(r, &range, tol) {
            range.push(q);
        }
        if range.len() == n {
            break;
        }
    }
    let mut basis = range.clone();
    let mut null = Vec::with_capacity(n - range.len());
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let e = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
        if let Some(q) = orthogonalize(&e, &basis, 1e-8) {
            basis.push(q.clone());
            null.push(q);
        }
    }
    (range, null)
}

fn orthogonalize(v: &DVector<f64>, basis: &[DVector<f64>], tol: f64) -> Option<DVector<f64>> {
    let norm0 = v.norm();
    if norm0 == 0.0 {
        return None;
    }
    let mut w = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
    }
    let norm = w.norm();
    if norm <= tol * norm0 {
        None
    } else {
        Some(w / norm)
    }
}

/// Stack vectors as the columns of a matrix.
pub(crate) fn columns(vs: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, vs.len(), |i, j| vs[j][i])
}

/// Minimum-norm least-squares solution of `m x = b`.
pub(crate) fn lstsq(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if m.ncols() == 0 {
        return DVector::zeros(0);
    }
    if m.nrows() == 0 {
        return DVector::zeros(m.ncols());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-13 * smax.max(f64::MIN_POSITIVE);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(m.ncols()))
}

/// Symmetry defect `max |m_ij - m_ji|`.
pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
