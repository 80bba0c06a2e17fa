//! Certification of the slope-stability estimate
//!
//! ```text
//! g(x) - f(x) <= S d + V + 2 sqrt(d S gap)
//! ```
//!
//! for `x` in the tube `U_r = {d(x, C_f) <= r}`, where `S` is the one-sided
//! sup of `s_g - s_f` over the tube, `V` the one-sided sup of `g - f` over
//! `C_f`, `d = d(x, C_f)` and `gap = f(x) - f_*`.
//!
//! A sampled sup over the tube only bounds `S` from below, so the certified
//! variant takes `S` over the points where the argument actually evaluates
//! slopes: `x`, the flow of `f` from `x`, and the projections of `x` and of
//! the truncation point onto `C_f`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convex::{argmin_with, ArgminDescription};
use crate::error::{Error, Result};
use crate::flow::{integrate_with, truncate_at_slope, FlowOptions, FlowTrajectory, Termination};
use crate::{bounds, ConvexFunction, Tolerances};

/// `sup max(v, 0)`; zero for an empty list.
pub fn one_sided_sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, &v| if v > m { v } else { m })
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `[0,1)^dim`, skipping the first few.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton dimension {dim} exceeds {}", PRIMES.len());
    (0..dim).map(|j| radical_inverse(index + 20, PRIMES[j])).collect()
}

/// Deterministic sample of `{y : d(y, C_f) <= r}`.
#[derive(Clone, Debug)]
pub struct Tube {
    pub radius: f64,
    pub samples: Vec<DVector<f64>>,
    /// Projection of each sample onto `C_f`.
    pub projections: Vec<DVector<f64>>,
    pub distances: Vec<f64>,
    /// Number of low-discrepancy candidates drawn.
    pub candidates: usize,
}

impl Tube {
    pub fn membership_slack(radius: f64) -> f64 {
        1e-8 * (1.0 + radius)
    }

    /// Halton points in the bounding box of `C_f` inflated by `radius`, kept
    /// when within `radius` of `C_f`. At most `64 * count + 1024` candidates
    /// are tried, so thin tubes in high dimension can return fewer samples.
    pub fn sample(am: &ArgminDescription, radius: f64, count: usize) -> Result<Tube> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("tube radius must be positive, got {radius}")));
        }
        let n = am.dim();
        let bbox = am.bounding_box()?;
        let mut tube =
            Tube { radius, samples: Vec::new(), projections: Vec::new(), distances: Vec::new(), candidates: 0 };
        let cap = 64 * count + 1024;
        let mut i = 0u64;
        while tube.samples.len() < count && tube.candidates < cap {
            let u = halton(i, n);
            i += 1;
            tube.candidates += 1;
            let y = DVector::from_iterator(
                n,
                bbox.iter().zip(&u).map(|(&(lo, hi), &t)| lo - radius + t * (hi - lo + 2.0 * radius)),
            );
            let (p, d) = am.project(&y)?;
            if d <= radius {
                tube.samples.push(y);
                tube.projections.push(p);
                tube.distances.push(d);
            }
        }
        Ok(tube)
    }

    pub fn contains(&self, am: &ArgminDescription, y: &DVector<f64>) -> Result<bool> {
        Ok(am.distance(y)? <= self.radius + Self::membership_slack(self.radius))
    }

    /// Add a point, such as a trajectory point, after checking membership.
    pub fn push(&mut self, am: &ArgminDescription, y: &DVector<f64>) -> Result<()> {
        let (p, d) = am.project(y)?;
        if d > self.radius + Self::membership_slack(self.radius) {
            return Err(Error::InvalidArgument(format!(
                "point at distance {d} lies outside the tube of radius {}",
                self.radius
            )));
        }
        self.samples.push(y.clone());
        self.projections.push(p);
        self.distances.push(d);
        Ok(())
    }
}

/// Slopes of `f` and `g` at each point.
fn slope_pairs(
    f: &ConvexFunction,
    g: &ConvexFunction,
    pts: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<Vec<(f64, f64)>> {
    pts.iter().map(|p| Ok((f.slope_with(p, tol)?, g.slope_with(p, tol)?))).collect()
}

fn slope_gap_sup(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().fold(0.0, |m: f64, &(sf, sg)| m.max(sg - sf))
}

/// One-sided slope deviation over the tube samples and over a certificate point set.
pub fn slope_deviation(
    f: &ConvexFunction,
    g: &ConvexFunction,
    tube: &Tube,
    certificate_points: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let cert = slope_gap_sup(&slope_pairs(f, g, certificate_points, tol)?);
    let sampled = slope_gap_sup(&slope_pairs(f, g, &tube.samples, tol)?);
    Ok((sampled.max(cert), cert))
}

/// The four scalars the estimate is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationTerms {
    pub slope_dev: f64,
    pub value_dev: f64,
    pub dist: f64,
    pub gap: f64,
}

impl DeviationTerms {
    /// Minimizer of `delta -> ad1(delta)`; zero when any factor vanishes.
    pub fn delta_star(&self) -> f64 {
        if self.slope_dev > 0.0 && self.dist > 0.0 && self.gap > 0.0 {
            (self.slope_dev * self.gap / self.dist).sqrt()
        } else {
            0.0
        }
    }

    pub fn rhs_main(&self) -> f64 {
        self.slope_dev * self.dist + self.value_dev + 2.0 * (self.dist * self.slope_dev * self.gap).sqrt()
    }

    /// `(S + delta) d + S gap / delta + V`.
    pub fn ad1(&self, delta: f64) -> f64 {
        assert!(delta > 0.0, "delta must be positive");
        let tail = if self.slope_dev == 0.0 { 0.0 } else { self.slope_dev * self.gap / delta };
        (self.slope_dev + delta) * self.dist + tail + self.value_dev
    }

    pub fn cv1(&self, k: f64) -> f64 {
        k * self.slope_dev * self.dist + self.value_dev
    }

    /// 33 geometric points over `[delta*/16, 16 delta*]`, or over a range far
    /// below the data scale when `delta* = 0`.
    pub fn delta_grid(&self) -> Vec<f64> {
        let ds = self.delta_star();
        let (lo, hi) = if ds > 0.0 {
            (ds / 16.0, ds * 16.0)
        } else {
            let s = 1.0 + self.slope_dev + self.value_dev.abs() + self.gap;
            (1e-15 * s, 1e-7 * s)
        };
        let ratio = (hi / lo).powf(1.0 / 32.0);
        let mut out: Vec<f64> = (0..33).map(|i| lo * ratio.powi(i)).collect();
        if ds > 0.0 {
            out[16] = ds;
        }
        out
    }

    /// `(argmin, min)` of `ad1` over [`Self::delta_grid`].
    pub fn ad1_grid_min(&self) -> (f64, f64) {
        self.delta_grid().into_iter().map(|d| (d, self.ad1(d))).fold((f64::NAN, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofCase {
    /// `x` already minimizes `f`.
    AtMinimizer,
    /// `s_f(x) <= delta*`: convexity at `x` alone.
    SmallSlope,
    /// Flow to the last point with slope above `delta*`, then convexity there.
    Integrated,
}

impl ProofCase {
    pub fn label(self) -> &'static str {
        match self {
            ProofCase::AtMinimizer => "at_minimizer",
            ProofCase::SmallSlope => "case_i",
            ProofCase::Integrated => "case_ii",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub flow: FlowOptions,
    pub tube_samples: usize,
    /// Dimensional length constant for the linear variant of the estimate.
    pub kn_constant: Option<f64>,
    pub tol: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { flow: FlowOptions::default(), tube_samples: 4096, kn_constant: None, tol: Tolerances::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationReport {
    pub n: usize,
    pub r: f64,
    pub x: Vec<f64>,
    pub f_x: f64,
    pub g_x: f64,
    pub dist_x: f64,
    pub gap_x: f64,
    pub slope_dev_tube: f64,
    pub slope_dev_traj: f64,
    pub value_dev_argmin: f64,
    pub delta_star: f64,
    pub rhs_main: f64,
    pub rhs_main_tube: f64,
    pub rhs_ad1_min: f64,
    pub delta_ad1_min: f64,
    pub rhs_cv1: Option<f64>,
    pub lhs: f64,
    pub margin: f64,
    pub scale: f64,
    pub proof_case: ProofCase,
    pub truncation_index: usize,
    pub s_f_at_t: f64,
    /// `s_g` at the truncation point, bounded by `S + s_f` there.
    pub s_g_at_t: f64,
    /// Path bound `g(p_T) - f_* + s_g(x_T) d_T + sum s_g(x_k) |x_{k+1} - x_k| - gap_x`,
    /// which dominates `lhs` by convexity of `g` alone.
    pub chain_bound: f64,
    pub kn_ratio: f64,
    pub flow_steps: usize,
    pub flow_termination: Termination,
    pub tube_samples: usize,
    /// `f(x_k) - g(x_k)` along the flow.
    pub deviation_sequence: Vec<f64>,
    pub equality: bool,
    pub passed: bool,
}

/// CSV row for a [`DeviationReport`].
#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub instance_id: usize,
    pub n: usize,
    pub r: f64,
    pub dist_x: f64,
    pub gap_x: f64,
    pub slope_dev_tube: f64,
    pub slope_dev_traj: f64,
    pub value_dev_argmin: f64,
    pub delta_star: f64,
    pub lhs: f64,
    pub rhs_main: f64,
    pub rhs_cv1: Option<f64>,
    pub margin: f64,
    pub proof_case: &'static str,
    pub passed: bool,
}

impl DeviationReport {
    pub fn terms(&self) -> DeviationTerms {
        DeviationTerms {
            slope_dev: self.slope_dev_traj,
            value_dev: self.value_dev_argmin,
            dist: self.dist_x,
            gap: self.gap_x,
        }
    }

    pub fn slack(&self) -> f64 {
        1e-6 * self.scale
    }

    pub fn row(&self, instance_id: usize) -> ReportRow {
        ReportRow {
            instance_id,
            n: self.n,
            r: self.r,
            dist_x: self.dist_x,
            gap_x: self.gap_x,
            slope_dev_tube: self.slope_dev_tube,
            slope_dev_traj: self.slope_dev_traj,
            value_dev_argmin: self.value_dev_argmin,
            delta_star: self.delta_star,
            lhs: self.lhs,
            rhs_main: self.rhs_main,
            rhs_cv1: self.rhs_cv1,
            margin: self.margin,
            proof_case: self.proof_case.label(),
            passed: self.passed,
        }
    }
}

/// Run the flow of `f` from `x`, truncate at `delta*` and evaluate every term
/// of the estimate for `g - f` at `x`.
pub fn verify_instance(
    f: &ConvexFunction,
    g: &ConvexFunction,
    x: &DVector<f64>,
    r: f64,
    opts: &VerifyOptions,
) -> Result<DeviationReport> {
    Ok(verify_with_trajectory(f, g, x, r, opts)?.0)
}

/// [`verify_instance`] that also returns the flow it ran.
pub fn verify_with_trajectory(
    f: &ConvexFunction,
    g: &ConvexFunction,
    x: &DVector<f64>,
    r: f64,
    opts: &VerifyOptions,
) -> Result<(DeviationReport, FlowTrajectory)> {
    let n = f.dim();
    if g.dim() != n {
        return Err(Error::Dimension { expected: n, got: g.dim() });
    }
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    let tol = &opts.tol;
    let am = argmin_with(f, tol)?;
    argmin_with(g, tol)?;
    let (p_x, dist_x) = am.project(x)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("tube radius must be positive, got {r}")));
    }
    if dist_x > r + Tube::membership_slack(r) {
        return Err(Error::InvalidArgument(format!(
            "x lies at distance {dist_x} from the argmin set, outside radius {r}"
        )));
    }
    let f_x = f.eval(x)?;
    let g_x = g.eval(x)?;
    let f_star = am.min_value;
    let gap_x = (f_x - f_star).max(0.0);
    let lhs = g_x - f_x;

    let traj = integrate_with(f, &am, x, &opts.flow, tol)?;
    let s_f = &traj.slopes;
    let s_g = traj.points.iter().map(|p| g.slope_with(p, tol)).collect::<Result<Vec<_>>>()?;
    let traj_dev = s_f.iter().zip(&s_g).fold(0.0f64, |m, (a, b)| m.max(b - a));

    // The projection of the truncation point enters the slope sup, which moves
    // delta* and with it the truncation point. delta* only grows, so the index
    // only moves back and the loop ends.
    let mut cert_pairs = slope_pairs(f, g, std::slice::from_ref(&p_x), tol)?;
    let mut projected: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut value_points = vec![p_x.clone(), am.witness.clone()];
    let (t, slope_dev_traj) = loop {
        let s = traj_dev.max(slope_gap_sup(&cert_pairs));
        let terms = DeviationTerms { slope_dev: s, value_dev: 0.0, dist: dist_x, gap: gap_x };
        let t = truncate_at_slope(&traj, terms.delta_star());
        if projected.iter().any(|(i, _)| *i == t) {
            break (t, s);
        }
        let (p_t, _) = am.project(&traj.points[t])?;
        cert_pairs.extend(slope_pairs(f, g, std::slice::from_ref(&p_t), tol)?);
        value_points.push(p_t.clone());
        projected.push((t, p_t));
    };
    let p_t = &projected.iter().find(|(i, _)| *i == t).unwrap().1;

    let mut tube = Tube::sample(&am, r, opts.tube_samples)?;
    let tube_dev = slope_gap_sup(&slope_pairs(f, g, &tube.samples, tol)?);
    let slope_dev_tube = tube_dev.max(slope_dev_traj);
    for p in &tube.projections {
        value_points.push(p.clone());
    }
    for p in traj.points.iter() {
        tube.push(&am, p)?;
    }
    let value_dev_argmin =
        one_sided_sup(&value_points.iter().map(|p| Ok(g.eval(p)? - f.eval(p)?)).collect::<Result<Vec<_>>>()?);

    let terms = DeviationTerms { slope_dev: slope_dev_traj, value_dev: value_dev_argmin, dist: dist_x, gap: gap_x };
    let tube_terms = DeviationTerms { slope_dev: slope_dev_tube, ..terms };
    let delta_star = terms.delta_star();
    let rhs_main = terms.rhs_main();
    let (delta_ad1_min, rhs_ad1_min) = terms.ad1_grid_min();
    let proof_case = if dist_x <= tol.tol_argmin {
        ProofCase::AtMinimizer
    } else if s_f[0] <= delta_star {
        ProofCase::SmallSlope
    } else {
        ProofCase::Integrated
    };

    let d_t = (&traj.points[t] - p_t).norm();
    let path: f64 = (0..t).map(|k| s_g[k] * (&traj.points[k + 1] - &traj.points[k]).norm()).sum();
    let chain_bound = g.eval(p_t)? - f_star + s_g[t] * d_t + path - gap_x;

    let scale = 1.0 + f_x.abs() + g_x.abs() + gap_x;
    let margin = rhs_main - lhs;
    let deviation_sequence =
        traj.values.iter().zip(&traj.points).map(|(fv, p)| Ok(fv - g.eval(p)?)).collect::<Result<Vec<_>>>()?;
    let report = DeviationReport {
        n,
        r,
        x: x.iter().copied().collect(),
        f_x,
        g_x,
        dist_x,
        gap_x,
        slope_dev_tube,
        slope_dev_traj,
        value_dev_argmin,
        delta_star,
        rhs_main,
        rhs_main_tube: tube_terms.rhs_main(),
        rhs_ad1_min,
        delta_ad1_min,
        rhs_cv1: opts.kn_constant.map(|k| terms.cv1(k)),
        lhs,
        margin,
        scale,
        proof_case,
        truncation_index: t,
        s_f_at_t: s_f[t],
        s_g_at_t: s_g[t],
        chain_bound,
        kn_ratio: bounds::kn_ratio(&traj),
        flow_steps: traj.last_index(),
        flow_termination: traj.termination,
        tube_samples: tube.samples.len(),
        deviation_sequence,
        equality: margin.abs() <= 1e-9 * scale,
        passed: lhs <= rhs_main + 1e-6 * scale,
    };
    Ok((report, traj))
}

/// A ball on which the corollary sequences are compared.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundedSet {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BoundedSet {
    /// The center plus Halton points of the ball.
    pub fn samples(&self, count: usize) -> Vec<DVector<f64>> {
        let n = self.center.len();
        let c = DVector::from_column_slice(&self.center);
        let mut out = vec![c.clone()];
        let mut i = 0u64;
        while out.len() < count && i < 64 * count as u64 + 1024 {
            let u = DVector::from_iterator(n, halton(i, n).into_iter().map(|t| 2.0 * t - 1.0));
            i += 1;
            if u.norm() <= 1.0 {
                out.push(&c + u * self.radius);
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorollaryRow {
    pub k: usize,
    pub slope_dev: f64,
    pub value_dev_argmin: f64,
    /// `sup_U (f_k - f)^+`.
    pub sup_dev: f64,
    pub envelope: f64,
    /// Same quantities with the roles of `f` and `f_k` swapped.
    pub reverse_slope_dev: f64,
    pub reverse_value_dev_argmin: f64,
    pub reverse_sup_dev: f64,
    pub reverse_envelope: f64,
    pub dominated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorollaryReport {
    pub rows: Vec<CorollaryRow>,
    /// Bounding box of the union of all argmin sets.
    pub argmin_union_box: Vec<(f64, f64)>,
    pub dominated_all: bool,
    /// Two-sided sup deviation is nonincreasing in `k` up to `1e-9` relative.
    pub monotone: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CorollaryOptions {
    pub set_samples: usize,
    pub tube_samples: usize,
    pub tol: Tolerances,
}

impl Default for CorollaryOptions {
    fn default() -> Self {
        Self { set_samples: 512, tube_samples: 512, tol: Tolerances::default() }
    }
}

struct OneSide {
    slope_dev: f64,
    value_dev: f64,
    sup_dev: f64,
    envelope: f64,
    pointwise_ok: bool,
}

/// Envelope for `sup_U (h - base)^+` built from slope and argmin deviations.
fn one_side(
    base: &ConvexFunction,
    am: &ArgminDescription,
    h: &ConvexFunction,
    set: &BoundedSet,
    u: &[DVector<f64>],
    opts: &CorollaryOptions,
) -> Result<OneSide> {
    let tol = &opts.tol;
    let c = DVector::from_column_slice(&set.center);
    let big_r = am.distance(&c)? + set.radius;
    let tube = Tube::sample(am, big_r, opts.tube_samples)?;
    let slope_dev =
        slope_gap_sup(&slope_pairs(base, h, &tube.samples, tol)?).max(slope_gap_sup(&slope_pairs(base, h, u, tol)?));
    let mut argmin_pts = tube.projections.clone();
    argmin_pts.push(am.witness.clone());
    let value_dev =
        one_sided_sup(&argmin_pts.iter().map(|p| Ok(h.eval(p)? - base.eval(p)?)).collect::<Result<Vec<_>>>()?);
    let mut sup_dev = 0.0f64;
    let mut max_gap = 0.0f64;
    let mut pointwise_ok = true;
    for x in u {
        let bx = base.eval(x)?;
        let dev = h.eval(x)? - bx;
        let gap = (bx - am.min_value).max(0.0);
        let d = am.distance(x)?;
        let terms = DeviationTerms { slope_dev, value_dev, dist: d, gap };
        let scale = 1.0 + bx.abs() + (bx + dev).abs() + gap;
        pointwise_ok &= dev <= terms.rhs_main() + 1e-9 * scale;
        sup_dev = sup_dev.max(dev);
        max_gap = max_gap.max(gap);
    }
    let envelope = DeviationTerms { slope_dev, value_dev, dist: big_r, gap: max_gap }.rhs_main();
    Ok(OneSide { slope_dev, value_dev, sup_dev, envelope, pointwise_ok })
}

/// Compare `f_k - f` on a ball with the envelope built from the slope
/// deviation on the tube and the value deviation on `C_f`, in both directions.
pub fn corollary_check(
    f: &ConvexFunction,
    fks: &[ConvexFunction],
    set: &BoundedSet,
    opts: &CorollaryOptions,
) -> Result<CorollaryReport> {
    let n = f.dim();
    if set.center.len() != n {
        return Err(Error::Dimension { expected: n, got: set.center.len() });
    }
    if !(set.radius > 0.0 && set.radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("set radius must be positive, got {}", set.radius)));
    }
    let am = argmin_with(f, &opts.tol)?;
    let mut union_box = am.bounding_box()?;
    let u = set.samples(opts.set_samples);
    let mut rows = Vec::with_capacity(fks.len());
    for (idx, fk) in fks.iter().enumerate() {
        if fk.dim() != n {
            return Err(Error::Dimension { expected: n, got: fk.dim() });
        }
        let am_k = argmin_with(fk, &opts.tol)?;
        for (b, (lo, hi)) in union_box.iter_mut().zip(am_k.bounding_box()?) {
            b.0 = b.0.min(lo);
            b.1 = b.1.max(hi);
        }
        let fwd = one_side(f, &am, fk, set, &u, opts)?;
        let rev = one_side(fk, &am_k, f, set, &u, opts)?;
        let dominated = fwd.pointwise_ok
            && rev.pointwise_ok
            && fwd.sup_dev <= fwd.envelope + 1e-9 * (1.0 + fwd.envelope)
            && rev.sup_dev <= rev.envelope + 1e-9 * (1.0 + rev.envelope);
        rows.push(CorollaryRow {
            k: idx + 1,
            slope_dev: fwd.slope_dev,
            value_dev_argmin: fwd.value_dev,
            sup_dev: fwd.sup_dev,
            envelope: fwd.envelope,
            reverse_slope_dev: rev.slope_dev,
            reverse_value_dev_argmin: rev.value_dev,
            reverse_sup_dev: rev.sup_dev,
            reverse_envelope: rev.envelope,
            dominated,
        });
    }
    let two_sided: Vec<f64> = rows.iter().map(|r| r.sup_dev.max(r.reverse_sup_dev)).collect();
    let monotone = two_sided.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    Ok(CorollaryReport { dominated_all: rows.iter().all(|r| r.dominated), rows, argmin_union_box: union_box, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::argmin;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn quick() -> VerifyOptions {
        VerifyOptions { tube_samples: 256, ..VerifyOptions::default() }
    }

    #[test]
    fn one_sided_sup_examples() {
        assert_eq!(one_sided_sup(&[-3.0, -1.0, -2.0]), 0.0);
        assert_eq!(one_sided_sup(&[-1.0, 2.0, 0.5]), 2.0);
        assert_eq!(one_sided_sup(&[]), 0.0);
    }

    #[test]
    fn halton_is_in_unit_cube() {
        for i in 0..100 {
            assert!(halton(i, 3).iter().all(|&t| (0.0..1.0).contains(&t)));
        }
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn tube_samples_respect_radius() {
        let f = ConvexFunction::abs();
        let am = argmin(&f).unwrap();
        let tube = Tube::sample(&am, 0.5, 100).unwrap();
        assert_eq!(tube.samples.len(), 100);
        for (s, d) in tube.samples.iter().zip(&tube.distances) {
            assert!(*d <= 0.5 + 1e-8);
            assert!(tube.contains(&am, s).unwrap());
        }
        let mut tube = tube;
        assert!(tube.push(&am, &v(&[2.0])).is_err());
    }

    #[test]
    fn scaled_quadratic_tube_sup() {
        let f = ConvexFunction::half_squared_norm(1);
        let eps = 0.1;
        let g = f.scale(1.0 + eps).unwrap();
        let am = argmin(&f).unwrap();
        let tube = Tube::sample(&am, 1.5, 10_000).unwrap();
        let (est, cert) = slope_deviation(&f, &g, &tube, &[], &Tolerances::default()).unwrap();
        assert_eq!(cert, 0.0);
        assert!((est - eps * 1.5).abs() <= 0.02 * eps * 1.5);
    }

    #[test]
    fn constant_shift_has_no_slope_deviation() {
        let f = ConvexFunction::abs();
        let g = f.add_constant(3.0);
        let am = argmin(&f).unwrap();
        let tube = Tube::sample(&am, 1.0, 50).unwrap();
        let (a, b) = slope_deviation(&f, &g, &tube, &tube.samples, &Tolerances::default()).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn terms_scaled_quadratic() {
        let t = DeviationTerms { slope_dev: 0.1, value_dev: 0.0, dist: 1.0, gap: 0.5 };
        assert!((t.rhs_main() - (0.1 + 2.0 * 0.05f64.sqrt())).abs() < 1e-15);
        let ds = t.delta_star();
        assert!((t.ad1(ds) - t.rhs_main()).abs() < 1e-15);
        let small = [ds / 4.0, ds / 2.0, ds, 2.0 * ds, 4.0 * ds].map(|d| t.ad1(d));
        assert!(small.iter().all(|&v| v >= small[2]));
        let (d, m) = t.ad1_grid_min();
        assert_eq!(d, ds);
        assert!((m - t.rhs_main()).abs() < 1e-15);
        assert!(t.ad1(1e9) > 1e8);
    }

    #[test]
    fn terms_constant_shift() {
        let t = DeviationTerms { slope_dev: 0.0, value_dev: 5.0, dist: 2.0, gap: 2.0 };
        assert_eq!(t.delta_star(), 0.0);
        assert_eq!(t.rhs_main(), 5.0);
        assert_eq!(t.cv1(7.0), 5.0);
        let (_, m) = t.ad1_grid_min();
        assert!((m - 5.0).abs() < 1e-9);
    }

    #[test]
    fn identical_functions() {
        let f = ConvexFunction::abs();
        let r = verify_instance(&f, &f, &v(&[1.0]), 2.0, &quick()).unwrap();
        assert_eq!((r.lhs, r.margin, r.slope_dev_traj, r.value_dev_argmin), (0.0, 0.0, 0.0, 0.0));
        assert!(r.passed);
    }

    #[test]
    fn constant_shift_is_equality_case() {
        let f = ConvexFunction::half_squared_norm(2);
        let g = f.add_constant(5.0);
        let r = verify_instance(&f, &g, &v(&[1.0, -0.5]), 2.0, &quick()).unwrap();
        assert!((r.lhs - 5.0).abs() < 1e-12);
        assert!((r.rhs_main - 5.0).abs() < 1e-12);
        assert!(r.margin.abs() < 1e-9 && r.equality && r.passed);
        assert_eq!(r.proof_case, ProofCase::Integrated);
        let r = verify_instance(&f, &g, &v(&[0.0, 0.0]), 1.0, &quick()).unwrap();
        assert_eq!(r.proof_case, ProofCase::AtMinimizer);
        assert!(r.equality && r.passed);
    }

    #[test]
    fn scaled_quadratic_instance() {
        let f = ConvexFunction::half_squared_norm(1);
        let g = f.scale(1.1).unwrap();
        let r = verify_instance(&f, &g, &v(&[1.0]), 1.0, &quick()).unwrap();
        assert!((r.lhs - 0.05).abs() < 1e-12);
        assert!((r.slope_dev_traj - 0.1).abs() < 1e-12);
        assert_eq!(r.value_dev_argmin, 0.0);
        assert!((r.rhs_main - (0.1 + 2.0 * 0.05f64.sqrt())).abs() < 1e-9);
        assert!((r.margin - 0.497).abs() < 1e-3);
        assert!(r.passed && r.lhs <= r.chain_bound + 1e-12);
        assert!((r.rhs_ad1_min - r.rhs_main).abs() <= 1e-2 * r.rhs_main);
    }

    #[test]
    fn cv1_one_dimensional() {
        let f = ConvexFunction::abs();
        let g = f.scale(1.3).unwrap().add_constant(0.2);
        let opts = VerifyOptions { kn_constant: Some(1.0), ..quick() };
        let r = verify_instance(&f, &g, &v(&[-1.5]), 2.0, &opts).unwrap();
        assert!(r.passed);
        assert!(r.lhs <= r.rhs_cv1.unwrap() + 1e-12);
        assert!((r.kn_ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn outside_tube_rejected() {
        let f = ConvexFunction::abs();
        assert!(verify_instance(&f, &f, &v(&[3.0]), 1.0, &quick()).is_err());
    }

    #[test]
    fn corollary_constant_family() {
        let f = ConvexFunction::half_squared_norm(2);
        let fks: Vec<_> = (1..=8).map(|k| f.add_constant(1.0 / k as f64)).collect();
        let set = BoundedSet { center: vec![0.0, 0.0], radius: 2.0 };
        let opts = CorollaryOptions { set_samples: 64, tube_samples: 64, ..Default::default() };
        let rep = corollary_check(&f, &fks, &set, &opts).unwrap();
        assert!(rep.dominated_all && rep.monotone);
        for row in &rep.rows {
            let e = 1.0 / row.k as f64;
            assert!((row.sup_dev - e).abs() < 1e-12);
            assert_eq!(row.slope_dev, 0.0);
            assert!((row.envelope - e).abs() < 1e-12);
            assert_eq!(row.reverse_sup_dev, 0.0);
        }
    }

    #[test]
    fn corollary_scaled_family() {
        let f = ConvexFunction::half_squared_norm(2);
        let fks: Vec<_> = (1..=8).map(|k| f.scale(1.0 + 1.0 / k as f64).unwrap()).collect();
        let set = BoundedSet { center: vec![0.0, 0.0], radius: 2.0 };
        let opts = CorollaryOptions { set_samples: 256, tube_samples: 256, ..Default::default() };
        let rep = corollary_check(&f, &fks, &set, &opts).unwrap();
        assert!(rep.dominated_all && rep.monotone);
        for row in &rep.rows {
            let k = row.k as f64;
            assert!(row.slope_dev <= 2.0 / k + 1e-12 && row.slope_dev > 0.9 * 2.0 / k);
            assert_eq!(row.value_dev_argmin, 0.0);
            assert!(row.sup_dev <= 2.0 / k + 1e-12);
        }
    }

    #[test]
    fn corollary_rejects_unbounded_argmin() {
        let f = ConvexFunction::half_squared_norm(1);
        let flat = ConvexFunction::max_affine(vec![v(&[0.0])], vec![0.0]).unwrap();
        let set = BoundedSet { center: vec![0.0], radius: 1.0 };
        let err = corollary_check(&f, &[flat], &set, &CorollaryOptions::default()).unwrap_err();
        assert!(matches!(err, Error::UnboundedArgmin));
    }
}
