//! Seeded random instances `(f, g, x)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::convex::argmin;
use crate::error::{Error, Result};
use crate::ConvexFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    PureQuadratic,
    MaxAffine,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// `g = f + offset + epsilon`.
    Constant,
    /// `g = f + epsilon (a'x + b)`.
    Affine,
    /// `g = (1 + epsilon) f`.
    Scale,
    /// Scaling, affine term and a small quadratic, all of size `epsilon`, plus `offset`.
    RandomMixed,
}

fn default_m() -> usize {
    4
}
fn default_box() -> f64 {
    2.0
}
fn default_x_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub n: usize,
    pub family: Family,
    /// Random affine pieces, before the `2n` box pieces.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Box pieces are `+-B x_i - B^2`.
    #[serde(default = "default_box")]
    pub box_bound: f64,
    pub perturbation: PerturbationKind,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub offset: f64,
    /// Add a constant piece that cuts a full-dimensional flat bottom.
    #[serde(default)]
    pub flat_bottom: bool,
    /// `x` is placed at distance up to this from a minimizer.
    #[serde(default = "default_x_scale")]
    pub x_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceSpec {
    /// Checks each field; the error names the offending one under `path`.
    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{path}.{field}: {msg}")));
        if !(1..=16).contains(&self.n) {
            return bad("n", format!("must be in 1..=16, got {}", self.n));
        }
        if self.family != Family::PureQuadratic && !(1..=64).contains(&self.m) {
            return bad("m", format!("must be in 1..=64, got {}", self.m));
        }
        if !(self.box_bound > 0.0 && self.box_bound.is_finite()) {
            return bad("box_bound", format!("must be positive, got {}", self.box_bound));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", format!("must be nonnegative, got {}", self.epsilon));
        }
        if !self.offset.is_finite() {
            return bad("offset", "must be finite".into());
        }
        if !(self.x_scale > 0.0 && self.x_scale.is_finite()) {
            return bad("x_scale", format!("must be positive, got {}", self.x_scale));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub f: ConvexFunction,
    pub g: ConvexFunction,
    pub x: DVector<f64>,
    /// Draws discarded by the self-checks or by the placement of `x`.
    pub rejections: usize,
}

/// Mix three words into a seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random_range(lo..hi)))
}

fn random_pieces(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
    let slopes = (0..m).map(|_| gaussian(rng, n)).collect();
    let offsets = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    (slopes, offsets)
}

fn push_box_pieces(slopes: &mut Vec<DVector<f64>>, offsets: &mut Vec<f64>, n: usize, b: f64) {
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[i] = sign * b;
            slopes.push(e);
            offsets.push(-b * b);
        }
    }
}

fn gram(rng: &mut ChaCha8Rng, n: usize, rank: usize, ridge: f64) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    &l * l.transpose() / n as f64 + DMatrix::identity(n, n) * ridge
}

fn draw_f(spec: &InstanceSpec, rng: &mut ChaCha8Rng) -> Result<ConvexFunction> {
    let n = spec.n;
    let f = match spec.family {
        Family::PureQuadratic => {
            let a = gram(rng, n, n, 0.2);
            let c = uniform(rng, n, -1.0, 1.0);
            ConvexFunction::new(a, c, vec![], vec![], rng.random_range(-1.0..1.0))?
        }
        Family::MaxAffine | Family::Mixed => {
            let (mut slopes, mut offsets) = random_pieces(rng, n, spec.m);
            push_box_pieces(&mut slopes, &mut offsets, n, spec.box_bound);
            let (a, c) = if spec.family == Family::Mixed {
                (gram(rng, n, n.div_ceil(2), 0.0), uniform(rng, n, -1.0, 1.0))
            } else {
                (DMatrix::zeros(n, n), DVector::zeros(n))
            };
            ConvexFunction::new(a, c, slopes, offsets, 0.0)?
        }
    };
    if !spec.flat_bottom || f.piece_count() == 0 {
        return Ok(f);
    }
    let am = argmin(&f)?;
    let z = &am.witness + uniform(rng, n, -1.0, 1.0);
    let level = am.min_value + 0.3 * (f.eval(&z)? - am.min_value);
    let mut slopes = f.affine_slopes().to_vec();
    let mut offsets = f.affine_offsets().to_vec();
    slopes.push(DVector::zeros(n));
    offsets.push(level - f.constant());
    ConvexFunction::new(f.quad_matrix().clone(), f.quad_center().clone(), slopes, offsets, f.constant())
}

fn perturb(spec: &InstanceSpec, f: &ConvexFunction, rng: &mut ChaCha8Rng) -> Result<ConvexFunction> {
    let n = spec.n;
    let eps = spec.epsilon;
    match spec.perturbation {
        PerturbationKind::Constant => Ok(f.add_constant(spec.offset + eps)),
        PerturbationKind::Affine => {
            let a = gaussian(rng, n) / (n as f64).sqrt();
            f.add_affine(&(a * eps), eps * rng.random_range(-1.0..1.0))
        }
        PerturbationKind::Scale => f.scale(1.0 + eps),
        PerturbationKind::RandomMixed => {
            let s = rng.random_range(-0.5..1.0);
            let a = gaussian(rng, n) / (n as f64).sqrt();
            let b = rng.random_range(-1.0..1.0);
            let q = ConvexFunction::quadratic(gram(rng, n, n, 0.0) * eps, uniform(rng, n, -1.0, 1.0))?;
            f.scale(1.0 + eps * s)?.add_affine(&(a * eps), eps * b)?.add(&q).map(|h| h.add_constant(spec.offset))
        }
    }
}

/// Midpoint convexity on random pairs and a bounded, nonempty argmin.
pub fn self_check(f: &ConvexFunction, rng: &mut ChaCha8Rng) -> Result<bool> {
    let n = f.dim();
    for _ in 0..16 {
        let a = uniform(rng, n, -3.0, 3.0);
        let b = uniform(rng, n, -3.0, 3.0);
        let mid = f.eval(&((&a + &b) * 0.5))?;
        let avg = 0.5 * (f.eval(&a)? + f.eval(&b)?);
        if mid > avg + 1e-9 * (1.0 + avg.abs()) {
            return Ok(false);
        }
    }
    match argmin(f).and_then(|am| am.bounding_box()) {
        Ok(_) => Ok(true),
        Err(Error::Unbounded | Error::UnboundedArgmin) => Ok(false),
        Err(e) => Err(e),
    }
}

const MAX_ATTEMPTS: usize = 64;

/// Deterministic in `spec` (including its seed).
pub fn generate(spec: &InstanceSpec) -> Result<Generated> {
    spec.validate("spec")?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rejections = 0;
    let f = loop {
        if rejections >= MAX_ATTEMPTS {
            return Err(Error::Generation(format!("no valid function after {MAX_ATTEMPTS} draws")));
        }
        let f = draw_f(spec, &mut rng)?;
        if self_check(&f, &mut rng)? {
            break f;
        }
        rejections += 1;
    };
    let g = perturb(spec, &f, &mut rng)?;
    let am = argmin(&f)?;
    let mut tries = 0;
    let x = loop {
        if tries >= 1000 {
            return Err(Error::Generation("rejection cap hit while placing x in the tube".into()));
        }
        tries += 1;
        let u = gaussian(&mut rng, spec.n);
        let norm = u.norm();
        if norm == 0.0 {
            continue;
        }
        let t = spec.x_scale * rng.random_range(0.1..1.0);
        let x = &am.witness + u * (t / norm);
        if am.distance(&x)? > 1e-3 * spec.x_scale {
            break x;
        }
        rejections += 1;
    };
    Ok(Generated { f, g, x, rejections })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, family: Family, perturbation: PerturbationKind) -> InstanceSpec {
        InstanceSpec {
            n,
            family,
            m: 6,
            box_bound: 2.0,
            perturbation,
            epsilon: 0.01,
            offset: 0.0,
            flat_bottom: false,
            x_scale: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn constant_shift_instance() {
        let s =
            InstanceSpec { epsilon: 0.0, offset: 5.0, ..spec(1, Family::PureQuadratic, PerturbationKind::Constant) };
        let inst = generate(&s).unwrap();
        for t in [-3.0, -0.4, 0.0, 1.7, 10.0] {
            let p = DVector::from_element(1, t);
            assert!((inst.g.eval(&p).unwrap() - inst.f.eval(&p).unwrap() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn max_affine_instance_passes_checks() {
        let s = InstanceSpec { flat_bottom: true, ..spec(2, Family::MaxAffine, PerturbationKind::Affine) };
        let inst = generate(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(self_check(&inst.f, &mut rng).unwrap());
        assert!(self_check(&inst.g, &mut rng).unwrap());
        assert_eq!(inst.f.piece_count(), 6 + 4 + 1);
        assert!(argmin(&inst.f).unwrap().distance(&inst.x).unwrap() > 0.0);
    }

    #[test]
    fn deterministic_under_seed() {
        for family in [Family::PureQuadratic, Family::MaxAffine, Family::Mixed] {
            let s = spec(3, family, PerturbationKind::RandomMixed);
            let a = generate(&s).unwrap();
            let b = generate(&s).unwrap();
            assert_eq!(a.f.to_json(), b.f.to_json());
            assert_eq!(a.g.to_json(), b.g.to_json());
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn validation_names_field() {
        let s = InstanceSpec { n: 0, ..spec(1, Family::Mixed, PerturbationKind::Scale) };
        let msg = s.validate("sweeps[0].spec").unwrap_err().to_string();
        assert!(msg.contains("sweeps[0].spec.n"), "{msg}");
        let s = InstanceSpec { epsilon: -1.0, ..spec(1, Family::Mixed, PerturbationKind::Scale) };
        assert!(s.validate("s").unwrap_err().to_string().contains("s.epsilon"));
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
    }
}
