//! Dense engines for the two convex subproblems everything else reduces to:
//! the minimal-norm point of a polytope and small linearly constrained QPs.
//!
//! Problem sizes are desk scale (n <= 16, m <= 64), so everything is dense.

mod qp;
mod wolfe;

pub use qp::{project_polyhedron, solve_qp, solve_qp_from, KktResiduals, QpProblem, QpSolution};
pub use wolfe::{min_norm_point, min_norm_point_with, wolfe_gap, MinNormPoint, Polytope};

use serde::Serialize;
use thiserror::Error;

/// Snapshot of a failed solve, dumpable as JSON for bug reports.
#[derive(Clone, Debug, Serialize)]
pub struct SolveDiagnostics {
    pub solver: &'static str,
    pub dim: usize,
    pub constraints: usize,
    pub iterations: usize,
    pub best_iterate: Vec<f64>,
    pub residual: f64,
}

impl SolveDiagnostics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

#[derive(Clone, Debug, Error)]
pub enum SolverError {
    #[error("{} did not converge after {} iterations (residual {:.3e})", .0.solver, .0.iterations, .0.residual)]
    NonConvergence(Box<SolveDiagnostics>),
    #[error("infeasible constraint system (phase-one residual {:.3e})", .0.residual)]
    Infeasible(Box<SolveDiagnostics>),
    #[error("objective unbounded below")]
    Unbounded(Box<SolveDiagnostics>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

impl SolverError {
    pub fn diagnostics(&self) -> Option<&SolveDiagnostics> {
        match self {
            SolverError::NonConvergence(d) | SolverError::Infeasible(d) | SolverError::Unbounded(d) => Some(d),
            _ => None,
        }
    }
}

/// Iteration cap shared by both engines.
pub(crate) fn iteration_cap(m: usize, n: usize) -> usize {
    10 * (m + n) * (m + n) + 50
}
