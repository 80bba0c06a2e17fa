//! Brute-force oracles shared by the integration tests. None of them calls the
//! solvers under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slope_lab::ConvexFunction;

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random_range(lo..hi)))
}

/// Rewrite offsets so that `k` randomly chosen pieces tie for the maximum at `x`.
pub fn with_ties(f: &ConvexFunction, x: &DVector<f64>, k: usize, rng: &mut ChaCha8Rng) -> ConvexFunction {
    let slopes = f.affine_slopes().to_vec();
    let mut offsets = f.affine_offsets().to_vec();
    let top = f.max_term(x);
    let m = slopes.len();
    for _ in 0..k.min(m) {
        let i = rng.random_range(0..m);
        offsets[i] = top - slopes[i].dot(x);
    }
    ConvexFunction::new(f.quad_matrix().clone(), f.quad_center().clone(), slopes, offsets, f.constant()).unwrap()
}

/// Gradient of the quadratic part and the slopes of the pieces within
/// `1e-9 (1 + |max|)` of the maximum, computed from the raw data.
pub fn active_data(f: &ConvexFunction, x: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
    let base = f.quad_matrix() * (x - f.quad_center());
    let vals: Vec<f64> = f.affine_slopes().iter().zip(f.affine_offsets()).map(|(a, b)| a.dot(x) + b).collect();
    if vals.is_empty() {
        return (base, vec![]);
    }
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-9 * (1.0 + top.abs());
    let gens = f.affine_slopes().iter().zip(&vals).filter(|(_, &v)| v >= top - eps).map(|(a, _)| a.clone()).collect();
    (base, gens)
}

/// `min ||base + sum l_i a_i||` over the simplex by enumerating every subset
/// of generators and solving the equality-constrained least squares on its
/// affine hull; subsets whose solution has a negative weight are discarded.
pub fn face_enumeration_norm(base: &DVector<f64>, gens: &[DVector<f64>]) -> f64 {
    if gens.is_empty() {
        return base.norm();
    }
    let k = gens.len();
    assert!(k <= 16, "face enumeration is exponential in the generator count");
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                kkt[(r, c)] = gens[i].dot(&gens[j]);
            }
            kkt[(r, s)] = 1.0;
            kkt[(s, r)] = 1.0;
            rhs[r] = -gens[i].dot(base);
        }
        rhs[s] = 1.0;
        let Ok(sol) = kkt.svd(true, true).solve(&rhs, 1e-12) else { continue };
        if (0..s).any(|r| sol[r] < -1e-12) {
            continue;
        }
        let total: f64 = (0..s).map(|r| sol[r]).sum();
        if (total - 1.0).abs() > 1e-9 {
            continue;
        }
        let mut p = base.clone();
        for (r, &i) in idx.iter().enumerate() {
            p += &gens[i] * sol[r];
        }
        best = best.min(p.norm());
    }
    best
}

/// The same minimum by a coarse simplex grid followed by pairwise mass
/// exchanges whose size is halved whenever no exchange improves.
pub fn simplex_grid_norm(base: &DVector<f64>, gens: &[DVector<f64>]) -> f64 {
    let k = gens.len();
    if k == 0 {
        return base.norm();
    }
    let eval = |l: &[f64]| {
        let mut p = base.clone();
        for (g, &w) in gens.iter().zip(l) {
            p += g * w;
        }
        p.norm_squared()
    };
    let res = if k <= 4 { 12 } else { 4 };
    let mut best = vec![1.0 / k as f64; k];
    let mut best_val = eval(&best);
    let mut stack = vec![(Vec::<usize>::new(), res)];
    while let Some((prefix, left)) = stack.pop() {
        if prefix.len() == k - 1 {
            let mut l: Vec<f64> = prefix.iter().map(|&c| c as f64 / res as f64).collect();
            l.push(left as f64 / res as f64);
            let val = eval(&l);
            if val < best_val {
                best_val = val;
                best = l;
            }
            continue;
        }
        for c in 0..=left {
            let mut p = prefix.clone();
            p.push(c);
            stack.push((p, left - c));
        }
    }
    let mut step = 0.5 / res as f64;
    while step > 1e-13 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let t = step.min(best[i]);
                if t <= 0.0 {
                    continue;
                }
                let mut l = best.clone();
                l[i] -= t;
                l[j] += t;
                let val = eval(&l);
                if val < best_val {
                    best_val = val;
                    best = l;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best_val.max(0.0).sqrt()
}

/// Minimum of `f` over a uniform grid of the box, refined around the best
/// point `rounds` times.
pub fn grid_min(f: &ConvexFunction, lo: &[f64], hi: &[f64], per_axis: usize, rounds: usize) -> (DVector<f64>, f64) {
    let n = lo.len();
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    let mut best = (DVector::zeros(n), f64::INFINITY);
    for _ in 0..rounds {
        let total = per_axis.pow(n as u32);
        for idx in 0..total {
            let mut r = idx;
            let p = DVector::from_iterator(
                n,
                (0..n).map(|j| {
                    let c = r % per_axis;
                    r /= per_axis;
                    lo[j] + (hi[j] - lo[j]) * c as f64 / (per_axis - 1) as f64
                }),
            );
            let val = f.eval(&p).unwrap();
            if val < best.1 {
                best = (p, val);
            }
        }
        for j in 0..n {
            let w = (hi[j] - lo[j]) / (per_axis - 1) as f64 * 6.0;
            lo[j] = best.0[j] - w;
            hi[j] = best.0[j] + w;
        }
    }
    best
}

/// Projected gradient for `min 1/2 x'Px + q'x` over a box.
pub fn box_qp(p: &DMatrix<f64>, q: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    let n = q.len();
    let l = p.norm() + 1e-12;
    let mut x = DVector::from_iterator(n, (0..n).map(|i| 0.5 * (lo[i] + hi[i])));
    for _ in 0..200_000 {
        let grad = p * &x + q;
        let mut next = &x - grad / l;
        for i in 0..n {
            next[i] = next[i].clamp(lo[i], hi[i]);
        }
        if (&next - &x).norm() < 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

/// `min c'x` over `{Gx <= h}` in the plane by enumerating intersections of
/// constraint pairs. `None` if no vertex is feasible.
pub fn lp_vertices_2d(c: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let m = g.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for i in 0..m {
        for j in i + 1..m {
            let a = DMatrix::from_row_slice(2, 2, &[g[(i, 0)], g[(i, 1)], g[(j, 0)], g[(j, 1)]]);
            let Some(inv) = a.try_inverse() else { continue };
            let x = inv * v(&[h[i], h[j]]);
            let feasible = (0..m).all(|r| g[(r, 0)] * x[0] + g[(r, 1)] * x[1] <= h[r] + 1e-9);
            if feasible {
                let val = c.dot(&x);
                if best.as_ref().is_none_or(|b| val < b.1) {
                    best = Some((x, val));
                }
            }
        }
    }
    best
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}
