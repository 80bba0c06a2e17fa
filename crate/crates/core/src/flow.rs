//! Subgradient flow `x' in -df(x)` integrated by implicit Euler (proximal
//! point) steps, plus monitors for the flow's structural properties.
//!
//! The proximal step keeps slopes nonincreasing, values decreasing and
//! distances to any minimizer nonincreasing at the discrete level. Step
//! control halves the step when the slope drops by more than
//! `slope_change_tol` in one step. A drop that does not shrink with the step is
//! a kink crossing; it is located by bisection to `event_resolution` so the
//! trajectory carries a point on each side of the kink.

use std::io::Write;

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::convex::{argmin_with, prox, prox_residual, ArgminDescription};
use crate::error::{Error, Result};
use crate::{ConvexFunction, Tolerances};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub initial_step: f64,
    pub max_step: f64,
    /// Largest relative slope drop accepted in one smooth step.
    pub slope_change_tol: f64,
    /// Stop once the slope falls to this level.
    pub slope_floor: f64,
    /// Stop once `f - f_*` falls below this fraction of the initial gap.
    pub value_gap_rel: f64,
    pub time_cap: f64,
    /// Largest displacement of one step, as a fraction of `d(x0, C_f)`.
    pub trust_fraction: f64,
    /// Width to which kink crossings are resolved in step size.
    pub event_resolution: f64,
    /// A step below this size is an error.
    pub min_step: f64,
    pub max_steps: usize,
    /// Use the closed-form flow of a pure positive-definite quadratic.
    pub exact_quadratic: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            max_step: 10.0,
            slope_change_tol: 0.02,
            slope_floor: 1e-12,
            value_gap_rel: 1e-8,
            time_cap: 1e4,
            trust_fraction: 0.1,
            event_resolution: 1e-9,
            min_step: 1e-12,
            max_steps: 200_000,
            exact_quadratic: false,
        }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("slope_change_tol", self.slope_change_tol),
            ("slope_floor", self.slope_floor),
            ("value_gap_rel", self.value_gap_rel),
            ("time_cap", self.time_cap),
            ("trust_fraction", self.trust_fraction),
            ("event_resolution", self.event_resolution),
            ("min_step", self.min_step),
        ];
        for (name, v) in fields {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!("flow option {name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("flow option max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    SlopeFloorReached,
    ValueGapReached,
    TimeCap,
    ReachedArgmin,
}

impl Termination {
    /// Whether the run ended at a numerically stationary point. Only the time
    /// and step caps leave a flow unfinished.
    pub fn is_complete(self) -> bool {
        !matches!(self, Termination::TimeCap)
    }
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub dist_to_argmin: Vec<f64>,
    pub cum_length: Vec<f64>,
    /// `dist((x_k - x_{k+1})/h_k, df(x_{k+1}))` per accepted step; empty in exact mode.
    pub step_residuals: Vec<f64>,
    pub min_value: f64,
    /// A fixed minimizer, used for the distance-to-minimizer monitor.
    pub anchor: DVector<f64>,
    pub termination: Termination,
}

/// One JSON-lines record of a trajectory dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub slope: f64,
    pub dist: f64,
    pub cumlen: f64,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }

    pub fn total_length(&self) -> f64 {
        *self.cum_length.last().expect("trajectory is nonempty")
    }

    pub fn records(&self) -> impl Iterator<Item = TrajectoryRecord> + '_ {
        (0..self.len()).map(|k| TrajectoryRecord {
            t: self.times[k],
            x: self.points[k].iter().copied().collect(),
            f: self.values[k],
            slope: self.slopes[k],
            dist: self.dist_to_argmin[k],
            cumlen: self.cum_length[k],
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn integrate(f: &ConvexFunction, x0: &DVector<f64>, opts: &FlowOptions) -> Result<FlowTrajectory> {
    let tol = Tolerances::default();
    let am = argmin_with(f, &tol)?;
    integrate_with(f, &am, x0, opts, &tol)
}

/// Integrate with a precomputed argmin description.
pub fn integrate_with(
    f: &ConvexFunction,
    am: &ArgminDescription,
    x0: &DVector<f64>,
    opts: &FlowOptions,
    tol: &Tolerances,
) -> Result<FlowTrajectory> {
    if x0.len() != f.dim() {
        return Err(Error::Dimension { expected: f.dim(), got: x0.len() });
    }
    opts.validate()?;
    if opts.exact_quadratic {
        return integrate_exact(f, am, x0, opts, tol);
    }
    let mut b = Builder::start(f, am, x0, opts, tol)?;
    let Some(trust) = b.trust_length() else {
        return Ok(b.finish(Termination::ReachedArgmin));
    };
    if let Some(t) = b.check_stop() {
        return Ok(b.finish(t));
    }

    let eta = opts.slope_change_tol;
    let mut h = opts.initial_step.min(opts.max_step);
    let mut clean = 0usize;
    loop {
        if b.time() >= opts.time_cap || b.traj.len() > opts.max_steps {
            return Ok(b.finish(Termination::TimeCap));
        }
        let here = b.current();
        let s0 = b.current_slope();
        let remaining = opts.time_cap - b.time();
        let step = h.min(remaining);
        let (y, s) = b.attempt(&here, step)?;
        if (&y - &here).norm() > trust || s > s0 * (1.0 + 1e-9) + 1e-12 {
            h = b.halve(h)?;
            clean = 0;
            continue;
        }
        let drop = s0 - s;
        if drop <= eta * s0 || step <= opts.event_resolution {
            b.accept(&here, step, y, s)?;
            clean += 1;
            if clean >= 5 && step == h {
                h = (2.0 * h).min(opts.max_step);
                clean = 0;
            }
        } else {
            // Shrink until the drop is acceptable.
            let mut hi = (step, y, s);
            let mut lo = loop {
                let h_lo = hi.0 / 2.0;
                if h_lo < opts.min_step {
                    return Err(Error::StepUnderflow { time: b.time(), step: h_lo });
                }
                let (y_lo, s_lo) = b.attempt(&here, h_lo)?;
                if s0 - s_lo <= eta * s0 || h_lo <= opts.event_resolution {
                    break (h_lo, y_lo, s_lo);
                }
                hi = (h_lo, y_lo, s_lo);
            };
            let drop_lo = s0 - lo.2;
            let drop_hi = s0 - hi.2;
            let is_jump = drop_hi > 2.0 * drop_lo + eta * s0;
            if is_jump && lo.0 > opts.event_resolution {
                while hi.0 - lo.0 > opts.event_resolution {
                    let mid = 0.5 * (lo.0 + hi.0);
                    let (y_mid, s_mid) = b.attempt(&here, mid)?;
                    let drop_mid = s0 - s_mid;
                    if drop_mid <= (s0 - lo.2) * mid / lo.0 + 0.5 * eta * s0 {
                        lo = (mid, y_mid, s_mid);
                    } else {
                        hi = (mid, y_mid, s_mid);
                    }
                }
                let gap = hi.0 - lo.0;
                let before = lo.1.clone();
                b.accept(&here, lo.0, lo.1, lo.2)?;
                if b.check_stop().is_none() && gap > 0.0 {
                    let (y_j, s_j) = b.attempt(&before, gap)?;
                    b.accept(&before, gap, y_j, s_j)?;
                }
                clean = 0;
            } else {
                b.accept(&here, lo.0, lo.1, lo.2)?;
                h = lo.0.max(opts.min_step);
                clean = 0;
            }
        }
        if let Some(t) = b.check_stop() {
            return Ok(b.finish(t));
        }
    }
}

struct Builder<'a> {
    f: &'a ConvexFunction,
    am: &'a ArgminDescription,
    opts: &'a FlowOptions,
    tol: &'a Tolerances,
    traj: FlowTrajectory,
    value_floor: f64,
}

impl<'a> Builder<'a> {
    fn start(
        f: &'a ConvexFunction,
        am: &'a ArgminDescription,
        x0: &DVector<f64>,
        opts: &'a FlowOptions,
        tol: &'a Tolerances,
    ) -> Result<Self> {
        let value = f.value(x0);
        let slope = f.slope_with(x0, tol)?;
        let dist = am.distance(x0)?;
        let gap0 = (value - am.min_value).max(0.0);
        let traj = FlowTrajectory {
            times: vec![0.0],
            points: vec![x0.clone()],
            values: vec![value],
            slopes: vec![slope],
            dist_to_argmin: vec![dist],
            cum_length: vec![0.0],
            step_residuals: Vec::new(),
            min_value: am.min_value,
            anchor: am.witness.clone(),
            termination: Termination::TimeCap,
        };
        Ok(Self { f, am, opts, tol, traj, value_floor: opts.value_gap_rel * gap0 })
    }

    fn trust_length(&self) -> Option<f64> {
        let d0 = self.traj.dist_to_argmin[0];
        if d0 <= self.tol.tol_argmin {
            None
        } else {
            Some(self.opts.trust_fraction * d0)
        }
    }

    fn time(&self) -> f64 {
        *self.traj.times.last().unwrap()
    }

    fn current(&self) -> DVector<f64> {
        self.traj.points.last().unwrap().clone()
    }

    fn current_slope(&self) -> f64 {
        *self.traj.slopes.last().unwrap()
    }

    fn attempt(&self, from: &DVector<f64>, h: f64) -> Result<(DVector<f64>, f64)> {
        let y = prox(self.f, h, from)?;
        let s = self.f.slope_with(&y, self.tol)?;
        Ok((y, s))
    }

    fn halve(&self, h: f64) -> Result<f64> {
        let h = h / 2.0;
        if h < self.opts.min_step {
            return Err(Error::StepUnderflow { time: self.time(), step: h });
        }
        Ok(h)
    }

    fn accept(&mut self, from: &DVector<f64>, h: f64, y: DVector<f64>, s: f64) -> Result<()> {
        let residual = prox_residual(self.f, h, from, &y, self.tol)?;
        let dist = self.am.distance(&y)?;
        let len = self.traj.total_length() + (&y - from).norm();
        let t = self.time() + h;
        self.traj.values.push(self.f.value(&y));
        self.traj.slopes.push(s);
        self.traj.dist_to_argmin.push(dist);
        self.traj.cum_length.push(len);
        self.traj.times.push(t);
        self.traj.points.push(y);
        self.traj.step_residuals.push(residual);
        Ok(())
    }

    fn check_stop(&self) -> Option<Termination> {
        let k = self.traj.last_index();
        if self.traj.dist_to_argmin[k] <= self.tol.tol_argmin {
            Some(Termination::ReachedArgmin)
        } else if self.traj.values[k] - self.traj.min_value <= self.value_floor {
            Some(Termination::ValueGapReached)
        } else if self.traj.slopes[k] <= self.opts.slope_floor {
            Some(Termination::SlopeFloorReached)
        } else {
            None
        }
    }

    fn finish(mut self, termination: Termination) -> FlowTrajectory {
        self.traj.termination = termination;
        self.traj
    }
}

fn integrate_exact(
    f: &ConvexFunction,
    am: &ArgminDescription,
    x0: &DVector<f64>,
    opts: &FlowOptions,
    tol: &Tolerances,
) -> Result<FlowTrajectory> {
    if f.piece_count() != 0 {
        return Err(Error::InvalidArgument("exact flow requires a pure quadratic".into()));
    }
    let eig = SymmetricEigen::new(f.quad_matrix().clone());
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::InvalidArgument("exact flow requires a positive definite quadratic".into()));
    }
    let c = f.quad_center();
    let coeffs = eig.eigenvectors.transpose() * (x0 - c);
    let at = |t: f64| -> DVector<f64> {
        let decayed = DVector::from_fn(coeffs.len(), |i, _| coeffs[i] * (-eig.eigenvalues[i] * t).exp());
        c + &eig.eigenvectors * decayed
    };
    let mut b = Builder::start(f, am, x0, opts, tol)?;
    if b.trust_length().is_none() {
        return Ok(b.finish(Termination::ReachedArgmin));
    }
    let h = opts.initial_step;
    loop {
        if let Some(t) = b.check_stop() {
            return Ok(b.finish(t));
        }
        if b.time() >= opts.time_cap || b.traj.len() > opts.max_steps {
            return Ok(b.finish(Termination::TimeCap));
        }
        let t = (b.time() + h).min(opts.time_cap);
        let y = at(t);
        let from = b.current();
        let len = b.traj.total_length() + (&y - &from).norm();
        b.traj.values.push(f.value(&y));
        b.traj.slopes.push(f.slope_with(&y, tol)?);
        b.traj.dist_to_argmin.push(am.distance(&y)?);
        b.traj.cum_length.push(len);
        b.traj.times.push(t);
        b.traj.points.push(y);
    }
}

/// Largest violation of one monotonicity property and where it occurred.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Violation {
    pub max: f64,
    pub index: Option<usize>,
}

impl Violation {
    fn record(&mut self, amount: f64, index: usize) {
        if amount > self.max {
            self.max = amount;
            self.index = Some(index);
        }
    }
}

/// Per-property violations; every field is zero on an exact subgradient curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PropertyReport {
    /// Slope increases along the trajectory.
    pub slope_increase: Violation,
    /// Value increases.
    pub value_increase: Violation,
    /// Decrease of consecutive secant slopes of `t -> f(x(t))`.
    pub value_concavity: Violation,
    /// Increases of the distance to the argmin set.
    pub dist_increase: Violation,
    /// Increases of the distance to a fixed minimizer.
    pub anchor_dist_increase: Violation,
    /// `1 + |f(x0)|`, the scale for value-based slacks.
    pub value_scale: f64,
}

impl PropertyReport {
    pub fn all_within(&self, slope_tol: f64, value_tol: f64, convexity_tol: f64, dist_tol: f64) -> bool {
        self.slope_increase.max <= slope_tol
            && self.value_increase.max <= value_tol * self.value_scale
            && self.value_concavity.max <= convexity_tol * self.value_scale
            && self.dist_increase.max <= dist_tol
            && self.anchor_dist_increase.max <= dist_tol
    }
}

pub fn check_properties(traj: &FlowTrajectory) -> PropertyReport {
    let mut r = PropertyReport { value_scale: 1.0 + traj.values[0].abs(), ..Default::default() };
    let anchor_dist: Vec<f64> = traj.points.iter().map(|p| (p - &traj.anchor).norm()).collect();
    for k in 1..traj.len() {
        r.slope_increase.record(traj.slopes[k] - traj.slopes[k - 1], k);
        r.value_increase.record(traj.values[k] - traj.values[k - 1], k);
        r.dist_increase.record(traj.dist_to_argmin[k] - traj.dist_to_argmin[k - 1], k);
        r.anchor_dist_increase.record(anchor_dist[k] - anchor_dist[k - 1], k);
    }
    let secant = |k: usize| (traj.values[k + 1] - traj.values[k]) / (traj.times[k + 1] - traj.times[k]);
    for k in 1..traj.len().saturating_sub(1) {
        r.value_concavity.record(secant(k - 1) - secant(k), k);
    }
    r
}

/// Last index whose slope exceeds `delta`, or 0 if there is none. Its point
/// plays the role of the truncation point where the slope first reaches `delta`.
pub fn truncate_at_slope(traj: &FlowTrajectory, delta: f64) -> usize {
    traj.slopes.iter().rposition(|&s| s > delta).unwrap_or(0)
}

pub fn arc_length(traj: &FlowTrajectory, upto: usize) -> Result<f64> {
    traj.cum_length
        .get(upto)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("index {upto} out of range for trajectory of {}", traj.len())))
}
