//! Length estimates for computed subgradient curves and slope-based recovery
//! of the value gap `f(x0) - f_*`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{truncate_at_slope, FlowTrajectory};
use crate::{ConvexFunction, Tolerances};

/// Length of the curve up to the truncation point against
/// `(f(x0) - f_*) / s_f(x_T)`.
#[derive(Clone, Debug, Serialize)]
pub struct LengthCertificate {
    pub delta: f64,
    pub truncation_index: usize,
    pub length_to_t: f64,
    pub lemma1_bound: f64,
    /// The weaker `(f(x0) - f_*) / delta`.
    pub delta_bound: f64,
    pub kn_ratio: f64,
    pub dist0: f64,
    pub gap0: f64,
    /// Slope at the truncation point is numerically zero; the bound is infinite.
    pub degenerate: bool,
    pub passed: bool,
}

/// CSV row for a [`LengthCertificate`].
#[derive(Clone, Debug, Serialize)]
pub struct CertificateRow {
    pub instance_id: usize,
    pub n: usize,
    pub dist_x0_cf: f64,
    pub f_gap: f64,
    pub delta: f64,
    pub t_index: usize,
    pub length_t: f64,
    pub lemma1_bound: f64,
    pub kn_ratio: f64,
    pub passed: bool,
}

impl LengthCertificate {
    pub fn row(&self, instance_id: usize, n: usize) -> CertificateRow {
        CertificateRow {
            instance_id,
            n,
            dist_x0_cf: self.dist0,
            f_gap: self.gap0,
            delta: self.delta,
            t_index: self.truncation_index,
            length_t: self.length_to_t,
            lemma1_bound: self.lemma1_bound,
            kn_ratio: self.kn_ratio,
            passed: self.passed,
        }
    }
}

pub fn lemma1_certificate(f: &ConvexFunction, traj: &FlowTrajectory, delta: f64) -> Result<LengthCertificate> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let x0 = &traj.points[0];
    let f0 = f.eval(x0)?;
    let gap0 = (f0 - traj.min_value).max(0.0);
    let t = truncate_at_slope(traj, delta);
    let length_to_t = traj.cum_length[t];
    let s_t = traj.slopes[t];
    let degenerate = s_t < 1e-14;
    let lemma1_bound = if degenerate { f64::INFINITY } else { gap0 / s_t };
    let slack = 1e-6 * (1.0 + f0.abs());
    Ok(LengthCertificate {
        delta,
        truncation_index: t,
        length_to_t,
        lemma1_bound,
        delta_bound: gap0 / delta,
        kn_ratio: kn_ratio(traj),
        dist0: traj.dist_to_argmin[0],
        gap0,
        degenerate,
        passed: length_to_t <= lemma1_bound + slack,
    })
}

/// `(length + final distance) / d(x0, C_f)`.
///
/// The final distance accounts for the unintegrated tail when the run stops at
/// the value-gap floor instead of inside the argmin set; a curve starting in
/// the argmin set gets ratio 1.
pub fn kn_ratio(traj: &FlowTrajectory) -> f64 {
    let d0 = traj.dist_to_argmin[0];
    if d0 <= 0.0 {
        return 1.0;
    }
    let tail = *traj.dist_to_argmin.last().unwrap();
    (traj.total_length() + tail) / d0
}

/// `n^(n/2 + 1)`, the growth order of the dimensional length constant.
pub fn kn_order(n: usize) -> f64 {
    let n = n as f64;
    n.powf(n / 2.0 + 1.0)
}

/// Relative accuracy of a measured length ratio. The argmin system is
/// inflated by a small value slack, which moves the boundary of `C_f` by
/// slack / slope; on nearly flat pieces that reaches 1e-9 relative.
pub const RATIO_TOL: f64 = 1e-6;

/// `ratio <= n^(n/2 + 1)` up to [`RATIO_TOL`]. At `n = 1` the bound is attained.
pub fn within_order_bound(ratio: f64, n: usize) -> bool {
    ratio <= kn_order(n) * (1.0 + RATIO_TOL)
}

#[derive(Clone, Debug, Serialize)]
pub struct KnStudy {
    pub n: usize,
    pub count: usize,
    /// Trajectories excluded because the flow did not reach the minimum.
    pub excluded: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub p90_ratio: f64,
    pub min_ratio: f64,
    pub order_bound: f64,
    pub within_bound: bool,
}

pub fn kn_ratio_study(trajectories: &[FlowTrajectory], n: usize) -> KnStudy {
    let mut ratios: Vec<f64> = trajectories.iter().filter(|t| t.termination.is_complete()).map(kn_ratio).collect();
    let excluded = trajectories.len() - ratios.len();
    ratios.sort_by(f64::total_cmp);
    let count = ratios.len();
    let quantile = |q: f64| {
        if count == 0 {
            f64::NAN
        } else {
            ratios[((count - 1) as f64 * q).round() as usize]
        }
    };
    let max_ratio = ratios.last().copied().unwrap_or(f64::NAN);
    let order_bound = kn_order(n);
    KnStudy {
        n,
        count,
        excluded,
        max_ratio,
        mean_ratio: if count == 0 { f64::NAN } else { ratios.iter().sum::<f64>() / count as f64 },
        median_ratio: quantile(0.5),
        p90_ratio: quantile(0.9),
        min_ratio: ratios.first().copied().unwrap_or(f64::NAN),
        order_bound,
        within_bound: count == 0 || within_order_bound(max_ratio, n),
    }
}

/// Value gap recovered from slopes alone.
#[derive(Clone, Debug, Serialize)]
pub struct Reconstruction {
    /// Trapezoidal `int s^2 dt`, taken in arc length as `int s dl`.
    pub integral: f64,
    /// Right- and left-endpoint sums; the true drop along the discrete path
    /// lies between them.
    pub lower: f64,
    pub upper: f64,
    /// False when the run stopped before reaching the minimum.
    pub complete: bool,
    /// Estimate `s_end * d_end` of what remains below the last point; an upper
    /// bound whenever the computed final slope is the true one.
    pub remaining_gap_bound: f64,
}

/// Integrate `s_f^2` along the trajectory using slopes recomputed with `f`.
pub fn reconstruct_value_gap(f: &ConvexFunction, traj: &FlowTrajectory) -> Result<Reconstruction> {
    let tol = Tolerances::default();
    let slopes = traj.points.iter().map(|p| f.slope_with(p, &tol)).collect::<Result<Vec<_>>>()?;
    Ok(reconstruct_from_slopes(
        &traj.points,
        &slopes,
        traj.termination.is_complete(),
        *traj.dist_to_argmin.last().unwrap(),
    ))
}

/// Core quadrature over a polygonal path. Since `|x'| = s` along the flow,
/// `int s^2 dt = int s dl`; the arc-length form is insensitive to the lag of
/// the implicit-Euler time parametrization.
pub fn reconstruct_from_slopes(
    points: &[DVector<f64>],
    slopes: &[f64],
    complete: bool,
    final_dist: f64,
) -> Reconstruction {
    assert_eq!(points.len(), slopes.len(), "one slope per point");
    let mut integral = 0.0;
    let mut lower = 0.0;
    let mut upper = 0.0;
    for k in 1..points.len() {
        let dl = (&points[k] - &points[k - 1]).norm();
        integral += 0.5 * (slopes[k - 1] + slopes[k]) * dl;
        lower += slopes[k] * dl;
        upper += slopes[k - 1] * dl;
    }
    let remaining_gap_bound = slopes.last().copied().unwrap_or(0.0) * final_dist;
    Reconstruction { integral, lower, upper, complete, remaining_gap_bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate, FlowOptions};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn abs_certificate_is_tight() {
        let f = ConvexFunction::abs();
        let traj = integrate(&f, &v(&[2.0]), &FlowOptions::default()).unwrap();
        let c = lemma1_certificate(&f, &traj, 0.5).unwrap();
        assert!(c.passed);
        assert!((c.length_to_t - 2.0).abs() < 1e-6);
        assert!((c.lemma1_bound - 2.0).abs() < 1e-12);
        assert!((c.delta_bound - 4.0).abs() < 1e-12);
    }

    #[test]
    fn start_in_argmin() {
        let f = ConvexFunction::abs();
        let traj = integrate(&f, &v(&[0.0]), &FlowOptions::default()).unwrap();
        let c = lemma1_certificate(&f, &traj, 0.5).unwrap();
        assert!(c.passed && c.degenerate);
        assert_eq!(c.length_to_t, 0.0);
        let r = reconstruct_value_gap(&f, &traj).unwrap();
        assert_eq!(r.integral, 0.0);
    }

    #[test]
    fn abs_reconstruction() {
        let f = ConvexFunction::abs();
        let traj = integrate(&f, &v(&[2.0]), &FlowOptions::default()).unwrap();
        let r = reconstruct_value_gap(&f, &traj).unwrap();
        assert!(r.complete);
        assert!((r.integral - 2.0).abs() < 1e-6);
        let drop = traj.values[0] - traj.values[traj.last_index()];
        assert!(r.lower <= drop + 1e-12 && drop <= r.upper + 1e-12);
    }

    #[test]
    fn quadratic_certificate_and_reconstruction() {
        let f = ConvexFunction::half_squared_norm(1);
        let traj = integrate(&f, &v(&[1.0]), &FlowOptions::default()).unwrap();
        let delta = (-1.0f64).exp();
        let c = lemma1_certificate(&f, &traj, delta).unwrap();
        assert!(c.passed);
        assert!((c.lemma1_bound - 0.5 / traj.slopes[c.truncation_index]).abs() < 1e-12);
        assert!(c.length_to_t <= 1.0 - delta + 1e-9 && c.length_to_t > 0.55);
        assert!(c.lemma1_bound <= 0.5 / delta && c.lemma1_bound > 0.95 * 0.5 / delta);
        let r = reconstruct_value_gap(&f, &traj).unwrap();
        assert!((r.integral - 0.5).abs() < 1e-3);
    }

    #[test]
    fn order_bound_values() {
        assert_eq!(kn_order(1), 1.0);
        assert_eq!(kn_order(2), 4.0);
        assert!((kn_order(4) - 64.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_delta() {
        let f = ConvexFunction::abs();
        let traj = integrate(&f, &v(&[1.0]), &FlowOptions::default()).unwrap();
        assert!(lemma1_certificate(&f, &traj, 0.0).is_err());
    }
}
