//! Convex functions of the form
//!
//! ```text
//!     f(x) = 1/2 (x - c)' A (x - c) + max_i (a_i' x + b_i) + d
//! ```
//!
//! with `A` symmetric positive semidefinite. The max term is zero when there
//! are no affine pieces. Every quantity the stability analysis needs
//! (subdifferential, slope, prox, argmin set, projection onto it) is computed
//! exactly up to solver tolerance for this class.

mod argmin;
mod prox;
mod serial;

pub use argmin::{argmin, argmin_with, ArgminDescription};
pub use prox::{prox, prox_residual};
pub use serial::FunctionDoc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, lstsq};
use crate::minnorm_qp::{min_norm_point_with, Polytope};
use crate::Tolerances;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexFunction {
    quad_matrix: DMatrix<f64>,
    quad_center: DVector<f64>,
    affine_slopes: Vec<DVector<f64>>,
    affine_offsets: Vec<f64>,
    constant: f64,
}

/// `base + conv(generators)`, or `{base}` when there are no generators.
#[derive(Clone, Debug)]
pub struct SubdifferentialPolytope {
    pub base: DVector<f64>,
    pub generators: Vec<DVector<f64>>,
}

impl SubdifferentialPolytope {
    pub fn to_polytope(&self) -> Polytope {
        if self.generators.is_empty() {
            Polytope::new(vec![self.base.clone()], None)
        } else {
            Polytope::new(self.generators.clone(), Some(self.base.clone()))
        }
        .expect("subdifferential generators share the function's dimension")
    }

    /// The same set shifted by `-v`; its minimal norm is `dist(v, set)`.
    pub fn shifted(&self, v: &DVector<f64>) -> Self {
        Self { base: &self.base - v, generators: self.generators.clone() }
    }
}

impl ConvexFunction {
    pub fn new(
        quad_matrix: DMatrix<f64>,
        quad_center: DVector<f64>,
        affine_slopes: Vec<DVector<f64>>,
        affine_offsets: Vec<f64>,
        constant: f64,
    ) -> Result<Self> {
        let n = quad_center.len();
        if n == 0 {
            return Err(Error::InvalidFunction("dimension must be positive".into()));
        }
        if quad_matrix.nrows() != n || quad_matrix.ncols() != n {
            return Err(Error::InvalidFunction(format!(
                "quadratic matrix is {}x{}, center has length {n}",
                quad_matrix.nrows(),
                quad_matrix.ncols()
            )));
        }
        if affine_slopes.len() != affine_offsets.len() {
            return Err(Error::InvalidFunction(format!(
                "{} slopes but {} offsets",
                affine_slopes.len(),
                affine_offsets.len()
            )));
        }
        if let Some(a) = affine_slopes.iter().find(|a| a.len() != n) {
            return Err(Error::Dimension { expected: n, got: a.len() });
        }
        let finite = quad_matrix.iter().all(|v| v.is_finite())
            && quad_center.iter().all(|v| v.is_finite())
            && affine_slopes.iter().all(|a| a.iter().all(|v| v.is_finite()))
            && affine_offsets.iter().all(|v| v.is_finite())
            && constant.is_finite();
        if !finite {
            return Err(Error::InvalidFunction("non-finite coefficient".into()));
        }
        let scale = quad_matrix.amax().max(1.0);
        if asymmetry(&quad_matrix) > 1e-12 * scale {
            return Err(Error::InvalidFunction("quadratic matrix is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(quad_matrix.clone()).eigenvalues.min();
        if min_eig < -1e-10 * scale {
            return Err(Error::InvalidFunction(format!("quadratic matrix has eigenvalue {min_eig:.3e} < 0")));
        }
        Ok(Self { quad_matrix, quad_center, affine_slopes, affine_offsets, constant })
    }

    /// `1/2 (x-c)'A(x-c)`.
    pub fn quadratic(a: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        Self::new(a, c, Vec::new(), Vec::new(), 0.0)
    }

    /// `max_i (a_i'x + b_i)`.
    pub fn max_affine(slopes: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        let n = slopes
            .first()
            .map(|a| a.len())
            .ok_or_else(|| Error::InvalidFunction("max-affine needs at least one piece".into()))?;
        Self::new(DMatrix::zeros(n, n), DVector::zeros(n), slopes, offsets, 0.0)
    }

    /// `1/2 ||x||^2` on R^n.
    pub fn half_squared_norm(n: usize) -> Self {
        Self::quadratic(DMatrix::identity(n, n), DVector::zeros(n)).expect("identity is PSD")
    }

    /// `|x|` on R.
    pub fn abs() -> Self {
        Self::max_affine(vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)], vec![0.0, 0.0])
            .expect("valid pieces")
    }

    pub fn dim(&self) -> usize {
        self.quad_center.len()
    }

    pub fn quad_matrix(&self) -> &DMatrix<f64> {
        &self.quad_matrix
    }

    pub fn quad_center(&self) -> &DVector<f64> {
        &self.quad_center
    }

    pub fn affine_slopes(&self) -> &[DVector<f64>] {
        &self.affine_slopes
    }

    pub fn affine_offsets(&self) -> &[f64] {
        &self.affine_offsets
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn has_quadratic(&self) -> bool {
        self.quad_matrix.iter().any(|&v| v != 0.0)
    }

    pub fn piece_count(&self) -> usize {
        self.affine_slopes.len()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn quad_value(&self, x: &DVector<f64>) -> f64 {
        if !self.has_quadratic() {
            return 0.0;
        }
        let dx = x - &self.quad_center;
        0.5 * dx.dot(&(&self.quad_matrix * &dx))
    }

    fn quad_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.quad_matrix * (x - &self.quad_center)
    }

    /// Values of the affine pieces at `x`.
    pub fn piece_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.affine_slopes.iter().zip(&self.affine_offsets).map(|(a, b)| a.dot(x) + b).collect()
    }

    /// The max term at `x` (zero without pieces).
    pub fn max_term(&self, x: &DVector<f64>) -> f64 {
        self.piece_values(x).into_iter().reduce(f64::max).unwrap_or(0.0)
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    /// Unchecked evaluation; panics in debug builds on dimension mismatch.
    pub(crate) fn value(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.quad_value(x) + self.max_term(x) + self.constant
    }

    pub fn subdifferential(&self, x: &DVector<f64>, eps_active: f64) -> Result<SubdifferentialPolytope> {
        self.check_dim(x)?;
        if eps_active < 0.0 || eps_active.is_nan() {
            return Err(Error::InvalidArgument(format!("eps_active must be >= 0, got {eps_active}")));
        }
        let base = self.quad_gradient(x);
        let values = self.piece_values(x);
        let generators = match values.iter().copied().reduce(f64::max) {
            None => Vec::new(),
            Some(top) => values
                .iter()
                .zip(&self.affine_slopes)
                .filter(|(v, _)| **v >= top - eps_active)
                .map(|(_, a)| a.clone())
                .collect(),
        };
        Ok(SubdifferentialPolytope { base, generators })
    }

    /// Subdifferential with the default activation slack.
    pub fn subdifferential_default(&self, x: &DVector<f64>, tol: &Tolerances) -> Result<SubdifferentialPolytope> {
        let eps = tol.eps_active(self.max_term(x));
        self.subdifferential(x, eps)
    }

    /// Minimal-norm subgradient and its norm (the slope).
    pub fn min_norm_subgradient(&self, x: &DVector<f64>, tol: &Tolerances) -> Result<(DVector<f64>, f64)> {
        let sub = self.subdifferential_default(x, tol)?;
        if sub.generators.is_empty() {
            let norm = sub.base.norm();
            return Ok((sub.base, norm));
        }
        let r = min_norm_point_with(&sub.to_polytope(), tol.tol_wolfe)
            .map_err(|source| Error::SlopeAt { point: x.iter().copied().collect(), source })?;
        Ok((r.point, r.norm))
    }

    /// `s_f(x) = dist(0, df(x))`.
    pub fn slope(&self, x: &DVector<f64>) -> Result<f64> {
        self.slope_with(x, &Tolerances::default())
    }

    pub fn slope_with(&self, x: &DVector<f64>, tol: &Tolerances) -> Result<f64> {
        Ok(self.min_norm_subgradient(x, tol)?.1)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    pub fn scale(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {lambda}")));
        }
        Ok(Self {
            quad_matrix: &self.quad_matrix * lambda,
            quad_center: self.quad_center.clone(),
            affine_slopes: self.affine_slopes.iter().map(|a| a * lambda).collect(),
            affine_offsets: self.affine_offsets.iter().map(|b| b * lambda).collect(),
            constant: self.constant * lambda,
        })
    }

    /// `f + (a'x + b)`.
    pub fn add_affine(&self, a: &DVector<f64>, b: f64) -> Result<Self> {
        self.check_dim(a)?;
        let mut out = self.clone();
        if out.affine_slopes.is_empty() {
            out.affine_slopes.push(a.clone());
            out.affine_offsets.push(0.0);
        } else {
            for s in &mut out.affine_slopes {
                *s += a;
            }
        }
        out.constant += b;
        Ok(out)
    }

    /// `x -> f(x - t)`.
    pub fn shift(&self, t: &DVector<f64>) -> Result<Self> {
        self.check_dim(t)?;
        Ok(Self {
            quad_matrix: self.quad_matrix.clone(),
            quad_center: &self.quad_center + t,
            affine_slopes: self.affine_slopes.clone(),
            affine_offsets: self.affine_slopes.iter().zip(&self.affine_offsets).map(|(a, b)| b - a.dot(t)).collect(),
            constant: self.constant,
        })
    }

    /// Exact representation of `f + g`. The max terms combine pairwise, so the
    /// piece count multiplies.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let n = self.dim();
        if other.dim() != n {
            return Err(Error::Dimension { expected: n, got: other.dim() });
        }
        let a = &self.quad_matrix + &other.quad_matrix;
        // Sum of quadratics: 1/2 x'Ax - x'w + k.
        let w = &self.quad_matrix * &self.quad_center + &other.quad_matrix * &other.quad_center;
        let k = self.quad_value(&DVector::zeros(n)) + other.quad_value(&DVector::zeros(n));
        let c = if a.iter().any(|&v| v != 0.0) { lstsq(&a, &w) } else { DVector::zeros(n) };
        // Whatever of w lies outside range(A) stays as a linear term.
        let linear = -(&w - &a * &c);
        let k_rest = k - 0.5 * c.dot(&(&a * &c));

        let (mut slopes, mut offsets) = match (self.affine_slopes.is_empty(), other.affine_slopes.is_empty()) {
            (true, true) => (Vec::new(), Vec::new()),
            (false, true) => (self.affine_slopes.clone(), self.affine_offsets.clone()),
            (true, false) => (other.affine_slopes.clone(), other.affine_offsets.clone()),
            (false, false) => {
                let mut s = Vec::with_capacity(self.piece_count() * other.piece_count());
                let mut o = Vec::with_capacity(s.capacity());
                for (ai, bi) in self.affine_slopes.iter().zip(&self.affine_offsets) {
                    for (aj, bj) in other.affine_slopes.iter().zip(&other.affine_offsets) {
                        s.push(ai + aj);
                        o.push(bi + bj);
                    }
                }
                (s, o)
            }
        };
        if linear.amax() > 0.0 {
            if slopes.is_empty() {
                slopes.push(linear);
                offsets.push(0.0);
            } else {
                for s in &mut slopes {
                    *s += &linear;
                }
            }
        }
        // Symmetrize away rounding from the sum.
        let a = (&a + a.transpose()) * 0.5;
        Self::new(a, c, slopes, offsets, self.constant + other.constant + k_rest)
    }

    /// `(1 - eps) f + eps g` for `eps` in `[0, 1]`.
    pub fn perturb_toward(&self, g: &Self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("perturbation weight must lie in [0,1], got {eps}")));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        if eps == 1.0 {
            return Ok(g.clone());
        }
        self.scale(1.0 - eps)?.add(&g.scale(eps)?)
    }
}
