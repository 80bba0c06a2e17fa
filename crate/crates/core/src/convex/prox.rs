//! Proximal map `prox_{h f}(x) = argmin_y f(y) + ||y - x||^2 / (2h)`.

use nalgebra::{DMatrix, DVector};

use super::argmin::epigraph_constraints;
use super::ConvexFunction;
use crate::error::{Error, Result};
use crate::minnorm_qp::{min_norm_point_with, solve_qp_from, QpProblem};
use crate::Tolerances;

pub fn prox(f: &ConvexFunction, step: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = f.dim();
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("prox step must be positive, got {step}")));
    }
    let inv = 1.0 / step;
    let mut m = f.quad_matrix().clone();
    for i in 0..n {
        m[(i, i)] += inv;
    }
    let r = f.quad_matrix() * f.quad_center() + x * inv;
    if f.piece_count() == 0 {
        let chol = m.cholesky().ok_or_else(|| Error::InvalidFunction("A + I/h not positive definite".into()))?;
        return Ok(chol.solve(&r));
    }
    let mut p = DMatrix::zeros(n + 1, n + 1);
    p.view_mut((0, 0), (n, n)).copy_from(&m);
    let mut q = DVector::zeros(n + 1);
    q.rows_mut(0, n).copy_from(&(-r));
    q[n] = 1.0;
    let (g, h) = epigraph_constraints(f);
    let prob = QpProblem::new(p, q).with_inequalities(g, h);
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x);
    start[n] = f.max_term(x);
    let sol = solve_qp_from(&prob, start)?;
    Ok(sol.x.rows(0, n).into_owned())
}

/// `dist((x - y)/h, df(y))`: zero exactly when `y = prox_{h f}(x)`.
pub fn prox_residual(
    f: &ConvexFunction,
    step: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tol: &Tolerances,
) -> Result<f64> {
    let v = (x - y) / step;
    let sub = f.subdifferential_default(y, tol)?.shifted(&v);
    if sub.generators.is_empty() {
        return Ok(sub.base.norm());
    }
    Ok(min_norm_point_with(&sub.to_polytope(), tol.tol_wolfe)?.norm)
}
