//! Wolfe's minimal-norm-point algorithm.
//!
//! Finds the point of `translation + conv(generators)` closest to the origin.
//! Each major cycle adds the generator minimizing `<x, p>`; minor cycles keep
//! the current corral's affine minimizer inside the simplex. Ties are broken by
//! lowest generator index.

use nalgebra::DVector;

use super::{iteration_cap, SolveDiagnostics, SolverError};
use crate::linalg::{columns, lstsq};

/// `translation + conv(generators)`.
#[derive(Clone, Debug)]
pub struct Polytope {
    generators: Vec<DVector<f64>>,
    translation: Option<DVector<f64>>,
}

impl Polytope {
    pub fn new(generators: Vec<DVector<f64>>, translation: Option<DVector<f64>>) -> Result<Self, SolverError> {
        let Some(first) = generators.first() else {
            return Err(SolverError::Invalid("polytope needs at least one generator".into()));
        };
        let n = first.len();
        if generators.iter().any(|g| g.len() != n) {
            return Err(SolverError::Dimension("generators of unequal length".into()));
        }
        if let Some(t) = &translation {
            if t.len() != n {
                return Err(SolverError::Dimension(format!("translation has length {}, generators {n}", t.len())));
            }
        }
        Ok(Self { generators, translation })
    }

    pub fn dim(&self) -> usize {
        self.generators[0].len()
    }

    pub fn generators(&self) -> &[DVector<f64>] {
        &self.generators
    }

    pub fn translation(&self) -> Option<&DVector<f64>> {
        self.translation.as_ref()
    }

    /// The translated vertices `translation + g_i`.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        match &self.translation {
            Some(t) => self.generators.iter().map(|g| g + t).collect(),
            None => self.generators.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinNormPoint {
    pub point: DVector<f64>,
    pub norm: f64,
    /// Convex weights over the generators (same order, sums to one).
    pub weights: Vec<f64>,
    pub iterations: usize,
}

pub fn min_norm_point(p: &Polytope) -> Result<MinNormPoint, SolverError> {
    min_norm_point_with(p, crate::Tolerances::default().tol_wolfe)
}

/// `min_i <v, p_i - v>`; nonnegative (up to rounding) exactly when `v` is the minimal-norm point.
pub fn wolfe_gap(p: &Polytope, v: &DVector<f64>) -> f64 {
    let vv = v.dot(v);
    p.vertices().iter().map(|q| v.dot(q) - vv).fold(f64::INFINITY, f64::min)
}

pub fn min_norm_point_with(p: &Polytope, tol_wolfe: f64) -> Result<MinNormPoint, SolverError> {
    let pts = p.vertices();
    let m = pts.len();
    let n = p.dim();
    let scale = pts.iter().map(|q| q.norm_squared()).fold(1.0, f64::max);
    let tol = tol_wolfe * scale;
    let cap = iteration_cap(m, n);

    let start = argmin_by(m, |i| pts[i].norm_squared());
    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = pts[start].clone();
    let mut iterations = 0;

    let fail = |x: &DVector<f64>, iterations: usize| {
        let vv = x.dot(x);
        let gap = pts.iter().map(|q| x.dot(q) - vv).fold(f64::INFINITY, f64::min);
        SolverError::NonConvergence(Box::new(SolveDiagnostics {
            solver: "min_norm_point",
            dim: n,
            constraints: m,
            iterations,
            best_iterate: x.iter().copied().collect(),
            residual: -gap,
        }))
    };

    loop {
        iterations += 1;
        if iterations > cap {
            return Err(fail(&x, iterations));
        }
        let j = argmin_by(m, |i| x.dot(&pts[i]));
        if x.dot(&x) - x.dot(&pts[j]) <= tol || corral.contains(&j) {
            break;
        }
        corral.push(j);
        lambda.push(0.0);

        loop {
            iterations += 1;
            if iterations > cap {
                return Err(fail(&x, iterations));
            }
            let alpha = affine_minimizer(&pts, &corral, n);
            if alpha.iter().all(|&a| a > 0.0) {
                lambda = alpha;
                break;
            }
            // Largest step from lambda toward alpha that stays in the simplex.
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 0.0 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut kept_c = Vec::with_capacity(corral.len());
            let mut kept_l = Vec::with_capacity(corral.len());
            let mut dropped = false;
            for (&c, &l) in corral.iter().zip(&lambda) {
                if l <= 1e-15 {
                    dropped = true;
                } else {
                    kept_c.push(c);
                    kept_l.push(l);
                }
            }
            if !dropped {
                // Rounding kept every weight positive: drop the smallest.
                let k = argmin_by(kept_l.len(), |i| kept_l[i]);
                kept_c.remove(k);
                kept_l.remove(k);
            }
            let total: f64 = kept_l.iter().sum();
            corral = kept_c;
            lambda = kept_l.into_iter().map(|l| l / total).collect();
            if corral.len() == 1 {
                lambda = vec![1.0];
                break;
            }
        }
        x = combine(&pts, &corral, &lambda, n);
    }

    let mut weights = vec![0.0; m];
    for (&c, &l) in corral.iter().zip(&lambda) {
        weights[c] += l;
    }
    let norm = x.norm();
    Ok(MinNormPoint { point: x, norm, weights, iterations })
}

fn argmin_by(m: usize, key: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_val = key(0);
    for i in 1..m {
        let v = key(i);
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

fn combine(pts: &[DVector<f64>], corral: &[usize], lambda: &[f64], n: usize) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    for (&c, &l) in corral.iter().zip(lambda) {
        x.axpy(l, &pts[c], 1.0);
    }
    x
}

/// Weights of the point of `aff{p_c : c in corral}` closest to the origin.
fn affine_minimizer(pts: &[DVector<f64>], corral: &[usize], n: usize) -> Vec<f64> {
    if corral.len() == 1 {
        return vec![1.0];
    }
    let p0 = &pts[corral[0]];
    let diffs: Vec<DVector<f64>> = corral[1..].iter().map(|&c| &pts[c] - p0).collect();
    let b = columns(&diffs, n);
    let beta = lstsq(&b, &(-p0));
    let mut alpha = Vec::with_capacity(corral.len());
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter().copied());
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn symmetric_pair_gives_origin() {
        let p = Polytope::new(vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0])], None).unwrap();
        let r = min_norm_point(&p).unwrap();
        assert!(r.norm < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singleton() {
        let p = Polytope::new(vec![v(&[3.0, -4.0])], None).unwrap();
        let r = min_norm_point(&p).unwrap();
        assert_eq!(r.norm, 5.0);
        assert_eq!(r.point, v(&[3.0, -4.0]));
    }

    #[test]
    fn triangle_edge_midpoint() {
        let p = Polytope::new(vec![v(&[2.0, 1.0]), v(&[1.0, 2.0]), v(&[2.0, 2.0])], None).unwrap();
        let r = min_norm_point(&p).unwrap();
        assert!((&r.point - v(&[1.5, 1.5])).norm() < 1e-12);
        assert!((r.norm - 4.5f64.sqrt()).abs() < 1e-12);
        assert!(wolfe_gap(&p, &r.point) >= -1e-10);
    }

    #[test]
    fn translation_is_applied() {
        let p = Polytope::new(vec![v(&[1.0]), v(&[-1.0])], Some(v(&[3.0]))).unwrap();
        let r = min_norm_point(&p).unwrap();
        assert!((r.point[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_generators_rejected() {
        assert!(matches!(Polytope::new(vec![], None), Err(SolverError::Invalid(_))));
        assert!(matches!(Polytope::new(vec![v(&[1.0]), v(&[1.0, 2.0])], None), Err(SolverError::Dimension(_))));
    }

    #[test]
    fn origin_inside_square() {
        let p = Polytope::new(vec![v(&[1.0, 1.0]), v(&[-1.0, 1.0]), v(&[-1.0, -1.0]), v(&[1.0, -1.0])], None).unwrap();
        let r = min_norm_point(&p).unwrap();
        assert!(r.norm < 1e-14);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }
}
