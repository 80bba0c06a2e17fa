//! Minimal value and minimizer set of a [`ConvexFunction`].
//!
//! On the argmin set the quadratic part is affine: two minimizers `y1, y2`
//! must satisfy `A(y1 - y2) = 0`, otherwise the midpoint would be strictly
//! better. Linearizing the quadratic at one minimizer `y*` therefore turns
//! `{y : f(y) <= f_*}` into a polyhedron intersected with the affine set
//! `{y : A y = A y*}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::ConvexFunction;
use crate::error::{Error, Result};
use crate::minnorm_qp::{solve_qp_from, QpProblem, SolverError};
use crate::Tolerances;

#[derive(Clone, Debug)]
pub struct ArgminDescription {
    pub min_value: f64,
    pub witness: DVector<f64>,
    /// `ineq_lhs * y <= ineq_rhs`.
    pub ineq_lhs: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    /// `eq_lhs * y = eq_rhs`.
    pub eq_lhs: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

pub fn argmin(f: &ConvexFunction) -> Result<ArgminDescription> {
    argmin_with(f, &Tolerances::default())
}

pub fn argmin_with(f: &ConvexFunction, tol: &Tolerances) -> Result<ArgminDescription> {
    let n = f.dim();
    let a = f.quad_matrix();
    let c = f.quad_center();
    let m = f.piece_count();

    let witness = if m == 0 {
        c.clone()
    } else {
        // Epigraph form over z = (y, t): min 1/2 (y-c)'A(y-c) + t  s.t.  a_i'y + b_i <= t.
        let mut p = DMatrix::zeros(n + 1, n + 1);
        p.view_mut((0, 0), (n, n)).copy_from(a);
        let mut q = DVector::zeros(n + 1);
        q.rows_mut(0, n).copy_from(&(-(a * c)));
        q[n] = 1.0;
        let (g, h) = epigraph_constraints(f);
        let prob = QpProblem::new(p, q).with_inequalities(g, h);
        let mut start = DVector::zeros(n + 1);
        start.rows_mut(0, n).copy_from(c);
        start[n] = f.max_term(c);
        match solve_qp_from(&prob, start) {
            Ok(sol) => sol.x.rows(0, n).into_owned(),
            Err(SolverError::Unbounded(_)) => return Err(Error::Unbounded),
            Err(e) => return Err(e.into()),
        }
    };
    let min_value = f.value(&witness);

    let scale = a.amax().max(1.0);
    let eig = SymmetricEigen::new(a.clone());
    let range: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 1e-10 * scale).collect();
    let eq_lhs = DMatrix::from_fn(range.len(), n, |r, j| eig.eigenvectors[(j, range[r])]);
    let eq_rhs = &eq_lhs * &witness;

    let grad = a * (&witness - c);
    let dq = &witness - c;
    let quad_at = 0.5 * dq.dot(&(a * &dq));
    let slack = tol.argmin_slack_rel * (1.0 + min_value.abs());
    let level = min_value - f.constant() - quad_at + grad.dot(&witness);
    let ineq_lhs = DMatrix::from_fn(m, n, |i, j| grad[j] + f.affine_slopes()[i][j]);
    let ineq_rhs = DVector::from_fn(m, |i, _| level - f.affine_offsets()[i] + slack);

    Ok(ArgminDescription { min_value, witness, ineq_lhs, ineq_rhs, eq_lhs, eq_rhs })
}

/// Rows `[a_i', -1] z <= -b_i` of the epigraph form.
pub(crate) fn epigraph_constraints(f: &ConvexFunction) -> (DMatrix<f64>, DVector<f64>) {
    let n = f.dim();
    let m = f.piece_count();
    let g = DMatrix::from_fn(m, n + 1, |i, j| if j < n { f.affine_slopes()[i][j] } else { -1.0 });
    let h = DVector::from_fn(m, |i, _| -f.affine_offsets()[i]);
    (g, h)
}

impl ArgminDescription {
    pub fn dim(&self) -> usize {
        self.witness.len()
    }

    /// Largest violation of the constraint system at `y`.
    pub fn violation(&self, y: &DVector<f64>) -> f64 {
        let ineq = (&self.ineq_lhs * y - &self.ineq_rhs).iter().fold(0.0f64, |acc, &v| acc.max(v));
        let eq = if self.eq_rhs.is_empty() { 0.0 } else { (&self.eq_lhs * y - &self.eq_rhs).amax() };
        ineq.max(eq)
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.violation(y) <= tol
    }

    /// Projection onto the argmin set and the distance to it.
    pub fn project(&self, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        let y = if self.ineq_rhs.is_empty() {
            // Affine set through the witness: remove the component along the equality rows.
            let r = &self.eq_lhs * (x - &self.witness);
            x - self.eq_lhs.transpose() * r
        } else if self.contains(x, 0.0) {
            x.clone()
        } else {
            let n = self.dim();
            let prob = QpProblem::new(DMatrix::identity(n, n), -x)
                .with_inequalities(self.ineq_lhs.clone(), self.ineq_rhs.clone())
                .with_equalities(self.eq_lhs.clone(), self.eq_rhs.clone());
            solve_qp_from(&prob, self.witness.clone())?.x
        };
        let d = (x - &y).norm();
        Ok((y, d))
    }

    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.project(x)?.1)
    }

    /// Coordinate-wise bounding box `[(lo, hi); n]` of the argmin set.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut bounds = [0.0; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut q = DVector::zeros(n);
                q[i] = sign;
                let prob = QpProblem::new(DMatrix::zeros(n, n), q)
                    .with_inequalities(self.ineq_lhs.clone(), self.ineq_rhs.clone())
                    .with_equalities(self.eq_lhs.clone(), self.eq_rhs.clone());
                bounds[k] = match solve_qp_from(&prob, self.witness.clone()) {
                    Ok(sol) => sol.x[i],
                    Err(SolverError::Unbounded(_)) => return Err(Error::UnboundedArgmin),
                    Err(e) => return Err(e.into()),
                };
            }
            out.push((bounds[0], bounds[1]));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn quadratic_has_unique_minimizer() {
        let c = v(&[1.0, -2.0]);
        let f = ConvexFunction::quadratic(DMatrix::identity(2, 2), c.clone()).unwrap();
        let am = argmin(&f).unwrap();
        assert_eq!(am.min_value, 0.0);
        assert!((&am.witness - &c).amax() < 1e-15);
        let (p, d) = am.project(&v(&[4.0, 2.0])).unwrap();
        assert!((p - c).amax() < 1e-14);
        assert!((d - 5.0).abs() < 1e-14);
    }

    #[test]
    fn flat_bottom_interval() {
        let f = ConvexFunction::max_affine(vec![v(&[1.0]), v(&[-1.0]), v(&[0.0])], vec![-1.0, -1.0, 0.0]).unwrap();
        let am = argmin(&f).unwrap();
        assert!(am.min_value.abs() < 1e-14);
        let bb = am.bounding_box().unwrap();
        assert!((bb[0].0 + 1.0).abs() < 1e-9 && (bb[0].1 - 1.0).abs() < 1e-9);
        let (p, d) = am.project(&v(&[3.0])).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9);
        assert!((d - 2.0).abs() < 1e-9);
        let (p, d) = am.project(&v(&[0.25])).unwrap();
        assert_eq!(p[0], 0.25);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn quadratic_plus_kink_off_center() {
        // 1/2 (x-1)^2 + |x| is minimized at 0 where A(y - c) != 0.
        let f =
            ConvexFunction::quadratic(DMatrix::identity(1, 1), v(&[1.0])).unwrap().add(&ConvexFunction::abs()).unwrap();
        let am = argmin(&f).unwrap();
        assert!(am.witness[0].abs() < 1e-12);
        assert!((am.min_value - 0.5).abs() < 1e-12);
        assert!(am.contains(&v(&[0.0]), 1e-9));
        assert!(!am.contains(&v(&[0.01]), 1e-9));
    }

    #[test]
    fn unbounded_reported() {
        let f = ConvexFunction::max_affine(vec![v(&[1.0, 0.0])], vec![0.0]).unwrap();
        assert!(matches!(argmin(&f), Err(Error::Unbounded)));
    }

    #[test]
    fn degenerate_quadratic_direction_bounded_by_pieces() {
        // 1/2 x1^2 + |x2|: C_f = {0}.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f =
            ConvexFunction::new(a, v(&[0.0, 0.0]), vec![v(&[0.0, 1.0]), v(&[0.0, -1.0])], vec![0.0, 0.0], 0.0).unwrap();
        let am = argmin(&f).unwrap();
        let (_, d) = am.project(&v(&[3.0, 4.0])).unwrap();
        assert!((d - 5.0).abs() < 1e-9);
    }
}
