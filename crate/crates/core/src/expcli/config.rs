//! Experiment configuration (JSON).
//!
//! ```json
//! {
//!   "sweeps": [{"name": "eps", "count": 10, "dims": [1, 2], "epsilons": [0.001, 0.01],
//!               "spec": {"n": 2, "family": "mixed", "perturbation": "scale"}}],
//!   "instances": [{"f": {...}, "g": {...}, "x": [1.0], "radius": 2.0}],
//!   "radius_factor": 2.0,
//!   "tube_samples": 4096
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::InstanceSpec;
use crate::error::{Error, Result};
use crate::flow::FlowOptions;
use crate::{ConvexFunction, Tolerances};

/// A family of generated instances. Every combination of `dims` and
/// `epsilons` gets `count` instances; the seed depends on the repetition and
/// the dimension but not on `epsilon`, so an epsilon sweep perturbs the same
/// `(f, x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub count: usize,
    pub spec: InstanceSpec,
    #[serde(default)]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

/// A hand-written instance. `g` defaults to `f`; `radius` to
/// `radius_factor * d(x, C_f)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitInstance {
    #[serde(default)]
    pub name: Option<String>,
    pub f: ConvexFunction,
    #[serde(default)]
    pub g: Option<ConvexFunction>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub reports: String,
    pub certificates: String,
    pub summary: String,
    pub plot: String,
    pub errors: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            reports: "reports.csv".into(),
            certificates: "certificates.csv".into(),
            summary: "summary.json".into(),
            plot: "plot.csv".into(),
            errors: "errors.csv".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweeps: Vec<Sweep>,
    pub instances: Vec<ExplicitInstance>,
    /// Tube radius as a multiple of `d(x, C_f)`.
    pub radius_factor: f64,
    pub tube_samples: usize,
    pub flow: FlowOptions,
    pub tolerances: Tolerances,
    /// Length constant for the linear estimate; the per-dimension maximum of
    /// observed length ratios when absent.
    pub kn_constant: Option<f64>,
    /// Length certificates truncate at this fraction of `s_f(x)`.
    pub certificate_delta_fraction: f64,
    pub outputs: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweeps: Vec::new(),
            instances: Vec::new(),
            radius_factor: 2.0,
            tube_samples: 4096,
            flow: FlowOptions::default(),
            tolerances: Tolerances::default(),
            kn_constant: None,
            certificate_delta_fraction: 0.5,
            outputs: OutputPaths::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: String, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if !(self.radius_factor >= 1.0 && self.radius_factor.is_finite()) {
            return bad("radius_factor".into(), format!("must be at least 1, got {}", self.radius_factor));
        }
        if self.tube_samples == 0 {
            return bad("tube_samples".into(), "must be positive".into());
        }
        if let Some(k) = self.kn_constant {
            if !(k >= 1.0 && k.is_finite()) {
                return bad("kn_constant".into(), format!("must be at least 1, got {k}"));
            }
        }
        let frac = self.certificate_delta_fraction;
        if !(frac > 0.0 && frac < 1.0) {
            return bad("certificate_delta_fraction".into(), format!("must be in (0, 1), got {frac}"));
        }
        self.flow.validate().map_err(|e| Error::Config(format!("flow: {e}")))?;
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_argmin", t.tol_argmin),
            ("tol_qp", t.tol_qp),
            ("eps_active_rel", t.eps_active_rel),
            ("tol_wolfe", t.tol_wolfe),
            ("argmin_slack_rel", t.argmin_slack_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerances.{name}"), format!("must be positive, got {v}"));
            }
        }
        for (i, s) in self.sweeps.iter().enumerate() {
            let path = format!("sweeps[{i}]");
            if s.count == 0 {
                return bad(format!("{path}.count"), "must be positive".into());
            }
            s.spec.validate(&format!("{path}.spec"))?;
            for (j, &n) in s.dims.iter().enumerate() {
                if !(1..=16).contains(&n) {
                    return bad(format!("{path}.dims[{j}]"), format!("must be in 1..=16, got {n}"));
                }
            }
            for (j, &e) in s.epsilons.iter().enumerate() {
                if !(e >= 0.0 && e.is_finite()) {
                    return bad(format!("{path}.epsilons[{j}]"), format!("must be nonnegative, got {e}"));
                }
            }
        }
        for (i, inst) in self.instances.iter().enumerate() {
            let path = format!("instances[{i}]");
            let n = inst.f.dim();
            if inst.x.len() != n {
                return bad(format!("{path}.x"), format!("has length {}, expected {n}", inst.x.len()));
            }
            if inst.g.as_ref().is_some_and(|g| g.dim() != n) {
                return bad(format!("{path}.g"), format!("dimension differs from f ({n})"));
            }
            if let Some(r) = inst.radius {
                if !(r > 0.0 && r.is_finite()) {
                    return bad(format!("{path}.radius"), format!("must be positive, got {r}"));
                }
            }
        }
        if self.sweeps.is_empty() && self.instances.is_empty() {
            return bad("sweeps".into(), "config defines no instances".into());
        }
        Ok(())
    }
}
