//! Primal active-set method for convex QPs
//!
//! ```text
//!     minimize    1/2 x'Px + q'x
//!     subject to  Gx <= h,  Ex = e
//! ```
//!
//! with `P` positive *semi*definite. On each working set the reduced Hessian is
//! inspected: if it is positive definite on the reduced gradient we take the
//! Newton step, otherwise we follow a zero-curvature descent ray until a
//! constraint blocks it (or report unboundedness). Blocking constraints and
//! dropped constraints are both chosen by lowest index among ties.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{iteration_cap, SolveDiagnostics, SolverError};
use crate::linalg::{asymmetry, columns, lstsq, range_and_null};

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub e: DMatrix<f64>,
    pub e_rhs: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    /// Inequalities in the final working set.
    pub active: Vec<usize>,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_ineq: f64,
    pub primal_eq: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal_ineq).max(self.primal_eq).max(self.dual).max(self.complementarity)
    }
}

impl QpProblem {
    /// Unconstrained problem in `q.len()` variables.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        Self { p, q, g: DMatrix::zeros(0, n), h: DVector::zeros(0), e: DMatrix::zeros(0, n), e_rhs: DVector::zeros(0) }
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_equalities(mut self, e: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.e = e;
        self.e_rhs = rhs;
        self
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.dim();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(SolverError::Dimension(format!(
                "P is {}x{}, expected {n}x{n}",
                self.p.nrows(),
                self.p.ncols()
            )));
        }
        if self.g.ncols() != n || self.g.nrows() != self.h.len() {
            return Err(SolverError::Dimension("inequality block inconsistent".into()));
        }
        if self.e.ncols() != n || self.e.nrows() != self.e_rhs.len() {
            return Err(SolverError::Dimension("equality block inconsistent".into()));
        }
        let scale = self.p.amax().max(1.0);
        if asymmetry(&self.p) > 1e-10 * scale {
            return Err(SolverError::Invalid("P is not symmetric".into()));
        }
        if n > 0 {
            let eig = SymmetricEigen::new(self.p.clone());
            if eig.eigenvalues.min() < -1e-10 * scale {
                return Err(SolverError::Invalid("P is not positive semidefinite".into()));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Largest constraint violation at `x`.
    pub fn infeasibility(&self, x: &DVector<f64>) -> f64 {
        let ineq = (&self.g * x - &self.h).iter().fold(0.0f64, |a, &v| a.max(v));
        let eq = (&self.e * x - &self.e_rhs).amax();
        ineq.max(eq)
    }

    pub fn kkt(&self, sol: &QpSolution) -> KktResiduals {
        let x = &sol.x;
        let mu = &sol.ineq_multipliers;
        let nu = &sol.eq_multipliers;
        let stat = &self.p * x + &self.q + self.g.transpose() * mu + self.e.transpose() * nu;
        let slack = &self.g * x - &self.h;
        KktResiduals {
            stationarity: stat.amax(),
            primal_ineq: slack.iter().fold(0.0f64, |a, &v| a.max(v)),
            primal_eq: (&self.e * x - &self.e_rhs).amax(),
            dual: mu.iter().fold(0.0f64, |a, &v| a.max(-v)),
            complementarity: mu.iter().zip(slack.iter()).fold(0.0f64, |a, (m, s)| a.max((m * s).abs())),
        }
    }

    fn feas_tol(&self) -> f64 {
        1e-9 * (1.0 + self.h.amax().max(self.e_rhs.amax()))
    }
}

/// Solve from scratch: a phase-one LP finds a feasible point first.
pub fn solve_qp(prob: &QpProblem) -> Result<QpSolution, SolverError> {
    prob.validate()?;
    let x0 = phase_one(prob)?;
    active_set(prob, x0)
}

/// Solve from a point that is feasible within the engine's tolerance.
pub fn solve_qp_from(prob: &QpProblem, start: DVector<f64>) -> Result<QpSolution, SolverError> {
    if start.len() != prob.dim() {
        return Err(SolverError::Dimension(format!("start has length {}, problem {}", start.len(), prob.dim())));
    }
    debug_assert!(prob.validate().is_ok());
    if prob.infeasibility(&start) > prob.feas_tol() {
        return solve_qp(prob);
    }
    active_set(prob, start)
}

/// Euclidean projection of `x` onto `{y : Gy <= h, Ey = e}`.
pub fn project_polyhedron(
    x: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    e: &DMatrix<f64>,
    e_rhs: &DVector<f64>,
    start: Option<&DVector<f64>>,
) -> Result<DVector<f64>, SolverError> {
    let n = x.len();
    let prob = QpProblem::new(DMatrix::identity(n, n), -x)
        .with_inequalities(g.clone(), h.clone())
        .with_equalities(e.clone(), e_rhs.clone());
    let sol = match start {
        Some(s) => solve_qp_from(&prob, s.clone())?,
        None => solve_qp(&prob)?,
    };
    Ok(sol.x)
}

fn phase_one(prob: &QpProblem) -> Result<DVector<f64>, SolverError> {
    let n = prob.dim();
    let mi = prob.h.len();
    let me = prob.e_rhs.len();
    let x0 = if me > 0 { lstsq(&prob.e, &prob.e_rhs) } else { DVector::zeros(n) };
    let tol = prob.feas_tol();
    let eq_res = if me > 0 { (&prob.e * &x0 - &prob.e_rhs).amax() } else { 0.0 };
    if eq_res > tol {
        return Err(infeasible(prob, &x0, eq_res, 0));
    }
    if mi == 0 {
        return Ok(x0);
    }
    let viol = (&prob.g * &x0 - &prob.h).max();
    if viol <= 0.0 {
        return Ok(x0);
    }
    // minimize s  s.t.  Gx - s <= h,  -s <= 0,  Ex = e
    let mut g1 = DMatrix::zeros(mi + 1, n + 1);
    g1.view_mut((0, 0), (mi, n)).copy_from(&prob.g);
    for i in 0..mi {
        g1[(i, n)] = -1.0;
    }
    g1[(mi, n)] = -1.0;
    let mut h1 = DVector::zeros(mi + 1);
    h1.rows_mut(0, mi).copy_from(&prob.h);
    let mut e1 = DMatrix::zeros(me, n + 1);
    e1.view_mut((0, 0), (me, n)).copy_from(&prob.e);
    let mut q1 = DVector::zeros(n + 1);
    q1[n] = 1.0;
    let lp = QpProblem::new(DMatrix::zeros(n + 1, n + 1), q1)
        .with_inequalities(g1, h1)
        .with_equalities(e1, prob.e_rhs.clone());
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&x0);
    start[n] = viol;
    let sol = active_set(&lp, start)?;
    let s = sol.x[n];
    let x = sol.x.rows(0, n).into_owned();
    if s > tol {
        return Err(infeasible(prob, &x, s, sol.iterations));
    }
    Ok(x)
}

fn infeasible(prob: &QpProblem, x: &DVector<f64>, residual: f64, iterations: usize) -> SolverError {
    SolverError::Infeasible(Box::new(SolveDiagnostics {
        solver: "solve_qp/phase_one",
        dim: prob.dim(),
        constraints: prob.h.len() + prob.e_rhs.len(),
        iterations,
        best_iterate: x.iter().copied().collect(),
        residual,
    }))
}

enum Direction {
    Newton(DVector<f64>),
    Ray(DVector<f64>),
}

fn active_set(prob: &QpProblem, start: DVector<f64>) -> Result<QpSolution, SolverError> {
    let n = prob.dim();
    let mi = prob.h.len();
    let me = prob.e_rhs.len();
    let g_rows: Vec<DVector<f64>> = (0..mi).map(|i| prob.g.row(i).transpose()).collect();
    let e_rows: Vec<DVector<f64>> = (0..me).map(|i| prob.e.row(i).transpose()).collect();
    let p_scale = prob.p.amax().max(1.0);
    let cap = iteration_cap(mi + me, n);

    let mut x = start;
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; mi];
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > cap {
            return Err(SolverError::NonConvergence(Box::new(SolveDiagnostics {
                solver: "solve_qp",
                dim: n,
                constraints: mi + me,
                iterations,
                best_iterate: x.iter().copied().collect(),
                residual: prob.infeasibility(&x),
            })));
        }
        let grad = &prob.p * &x + &prob.q;
        let grad_scale = 1.0 + grad.amax();

        let mut rows: Vec<DVector<f64>> = e_rows.clone();
        rows.extend(working.iter().map(|&i| g_rows[i].clone()));
        let (_, null) = range_and_null(&rows, n, 1e-10);

        let dir = if null.is_empty() {
            None
        } else {
            let z = columns(&null, n);
            let hz = z.transpose() * &prob.p * &z;
            let gz = z.transpose() * &grad;
            let eig = SymmetricEigen::new(hz);
            let tau = 1e-11 * p_scale;
            let mut newton = DVector::zeros(null.len());
            let mut ray = DVector::zeros(null.len());
            for k in 0..null.len() {
                let vk = eig.eigenvectors.column(k);
                let c = vk.dot(&gz);
                if eig.eigenvalues[k] > tau {
                    newton.axpy(-c / eig.eigenvalues[k], &vk, 1.0);
                } else {
                    ray.axpy(-c, &vk, 1.0);
                }
            }
            if ray.amax() > 1e-12 * grad_scale {
                Some(Direction::Ray(&z * ray))
            } else {
                let d = &z * newton;
                if d.amax() <= 1e-13 * (1.0 + x.amax()) {
                    None
                } else {
                    Some(Direction::Newton(d))
                }
            }
        };

        let Some(dir) = dir else {
            // Stationary on the working set: check multiplier signs.
            let a = columns(&rows, n);
            let lam = lstsq(&a, &(-&grad));
            let mu_w = lam.rows(me, working.len());
            let tol_mult = 1e-9 * grad_scale;
            let mut drop: Option<usize> = None;
            for (k, &i) in working.iter().enumerate() {
                if mu_w[k] < -tol_mult && drop.is_none_or(|d| i < working[d]) {
                    drop = Some(k);
                }
            }
            match drop {
                Some(k) => {
                    in_working[working[k]] = false;
                    working.remove(k);
                    continue;
                }
                None => {
                    let mut mu = DVector::zeros(mi);
                    for (k, &i) in working.iter().enumerate() {
                        mu[i] = mu_w[k].max(0.0);
                    }
                    let nu = lam.rows(0, me).into_owned();
                    let mut active = working.clone();
                    active.sort_unstable();
                    let objective = prob.objective(&x);
                    return Ok(QpSolution {
                        x,
                        ineq_multipliers: mu,
                        eq_multipliers: nu,
                        active,
                        iterations,
                        objective,
                    });
                }
            }
        };

        let (d, max_step) = match dir {
            Direction::Newton(d) => (d, 1.0),
            Direction::Ray(d) => (d, f64::INFINITY),
        };
        let dnorm = d.norm();
        let mut step = max_step;
        let mut blocking: Option<usize> = None;
        for i in 0..mi {
            if in_working[i] {
                continue;
            }
            let gd = g_rows[i].dot(&d);
            if gd <= 1e-12 * g_rows[i].norm() * dnorm {
                continue;
            }
            let slack = prob.h[i] - g_rows[i].dot(&x);
            let alpha = (slack / gd).max(0.0);
            // Lowest index wins ties within rounding.
            let tie = 1e-14 * (1.0 + alpha.abs());
            if alpha < step - tie || (blocking.is_some() && (alpha - step).abs() <= tie && i < blocking.unwrap()) {
                step = alpha;
                blocking = Some(i);
            }
        }
        if step.is_infinite() {
            return Err(SolverError::Unbounded(Box::new(SolveDiagnostics {
                solver: "solve_qp",
                dim: n,
                constraints: mi + me,
                iterations,
                best_iterate: x.iter().copied().collect(),
                residual: d.dot(&grad),
            })));
        }
        x.axpy(step, &d, 1.0);
        if let Some(i) = blocking {
            working.push(i);
            in_working[i] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn single_active_constraint() {
        // min ||x||^2  s.t.  x1 >= 1
        let prob = QpProblem::new(DMatrix::identity(3, 3) * 2.0, DVector::zeros(3))
            .with_inequalities(DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 0.0]), v(&[-1.0]));
        let sol = solve_qp(&prob).unwrap();
        assert!((&sol.x - v(&[1.0, 0.0, 0.0])).amax() < 1e-12);
        assert!(prob.kkt(&sol).max() < 1e-10);
        assert_eq!(sol.active, vec![0]);
    }

    #[test]
    fn unconstrained_identity() {
        let q = v(&[1.0, -2.0, 0.5]);
        let sol = solve_qp(&QpProblem::new(DMatrix::identity(3, 3), q.clone())).unwrap();
        assert!((sol.x + q).amax() < 1e-14);
    }

    #[test]
    fn lp_vertex() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0  -> (1.6, 1.2)
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let prob =
            QpProblem::new(DMatrix::zeros(2, 2), v(&[-1.0, -1.0])).with_inequalities(g, v(&[4.0, 6.0, 0.0, 0.0]));
        let sol = solve_qp(&prob).unwrap();
        assert!((&sol.x - v(&[1.6, 1.2])).amax() < 1e-12);
        assert!(prob.kkt(&sol).max() < 1e-10);
    }

    #[test]
    fn unbounded_lp_reported() {
        let prob = QpProblem::new(DMatrix::zeros(1, 1), v(&[1.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 1, &[1.0]), v(&[0.0]));
        assert!(matches!(solve_qp(&prob), Err(SolverError::Unbounded(_))));
    }

    #[test]
    fn infeasible_reported() {
        // x <= -1 and -x <= -1
        let prob = QpProblem::new(DMatrix::identity(1, 1), v(&[0.0]))
            .with_inequalities(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), v(&[-1.0, -1.0]));
        let err = solve_qp(&prob).unwrap_err();
        assert!(matches!(err, SolverError::Infeasible(_)));
        assert!(err.diagnostics().unwrap().to_json().contains("phase_one"));
    }

    #[test]
    fn equality_constrained() {
        // min ||x||^2/2  s.t.  x1 + x2 = 2
        let prob = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[2.0]));
        let sol = solve_qp(&prob).unwrap();
        assert!((&sol.x - v(&[1.0, 1.0])).amax() < 1e-12);
        assert!(prob.kkt(&sol).max() < 1e-10);
    }

    #[test]
    fn projection_onto_interval() {
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let y = project_polyhedron(&v(&[3.0]), &g, &v(&[1.0, 1.0]), &DMatrix::zeros(0, 1), &DVector::zeros(0), None)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let prob = QpProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&prob), Err(SolverError::Invalid(_))));
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Many constraints through the optimal vertex (0,0).
        let mut rows = Vec::new();
        let mut h = Vec::new();
        for k in 0..8 {
            let a = std::f64::consts::PI * (k as f64) / 16.0 + 0.1;
            rows.extend_from_slice(&[-a.cos(), -a.sin()]);
            h.push(0.0);
        }
        rows.extend_from_slice(&[-1.0, 0.0, 0.0, -1.0]);
        h.extend_from_slice(&[0.0, 0.0]);
        let g = DMatrix::from_row_slice(10, 2, &rows);
        let prob = QpProblem::new(DMatrix::zeros(2, 2), v(&[1.0, 1.0])).with_inequalities(g, DVector::from_vec(h));
        let sol = solve_qp_from(&prob, v(&[1.0, 1.0])).unwrap();
        assert!(sol.x.amax() < 1e-12);
    }
}
