//! Numerical tolerances shared by every module.
//!
//! All slacks live here so that a single `--tol-scale` factor can tighten or
//! loosen a whole run. Values are absolute unless the field name says `rel`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Distance below which a point counts as a minimizer.
    pub tol_argmin: f64,
    /// Feasibility and stationarity tolerance of the QP engine.
    pub tol_qp: f64,
    /// Relative activation slack: a piece is active at `x` when it is within
    /// `eps_active_rel * (1 + |max|)` of the maximum.
    pub eps_active_rel: f64,
    /// Wolfe optimality slack, relative to `max(1, max ||p_i||^2)`.
    pub tol_wolfe: f64,
    /// Relative inflation of the right-hand sides of the argmin system, so that
    /// single-point argmin sets survive rounding.
    pub argmin_slack_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_argmin: 1e-8, tol_qp: 1e-10, eps_active_rel: 1e-9, tol_wolfe: 1e-12, argmin_slack_rel: 1e-11 }
    }
}

impl Tolerances {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            tol_argmin: self.tol_argmin * factor,
            tol_qp: self.tol_qp * factor,
            eps_active_rel: self.eps_active_rel * factor,
            tol_wolfe: self.tol_wolfe * factor,
            argmin_slack_rel: self.argmin_slack_rel * factor,
        }
    }

    /// Activation slack at a point where the largest affine piece equals `max_value`.
    pub fn eps_active(&self, max_value: f64) -> f64 {
        self.eps_active_rel * (1.0 + max_value.abs())
    }
}
