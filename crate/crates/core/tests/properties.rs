mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use slope_lab::bounds::{lemma1_certificate, reconstruct_value_gap};
use slope_lab::convex::{argmin, prox};
use slope_lab::expcli::{generate, Family, InstanceSpec, PerturbationKind};
use slope_lab::flow::{check_properties, integrate, FlowOptions};
use slope_lab::minnorm_qp::{min_norm_point, wolfe_gap, Polytope};
use slope_lab::stability::{one_sided_sup, DeviationTerms};
use slope_lab::ConvexFunction;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::PureQuadratic), Just(Family::MaxAffine), Just(Family::Mixed)]
}

fn instance(n: usize, family: Family, seed: u64, flat: bool) -> (ConvexFunction, DVector<f64>) {
    let spec = InstanceSpec {
        n,
        family,
        m: 5,
        box_bound: 2.0,
        perturbation: PerturbationKind::Affine,
        epsilon: 0.01,
        offset: 0.0,
        flat_bottom: flat,
        x_scale: 1.5,
        seed,
    };
    let g = generate(&spec).unwrap();
    (g.f, g.x)
}

fn point(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slope_ignores_constants(seed in 0u64..10_000, fam in family(), c in -10.0f64..10.0, x in point(3)) {
        let (f, _) = instance(3, fam, seed, false);
        let g = f.add_constant(c);
        prop_assert_eq!(f.slope(&x).unwrap(), g.slope(&x).unwrap());
    }

    #[test]
    fn slope_scales_linearly(seed in 0u64..10_000, fam in family(), lambda in 0.1f64..10.0, x in point(2)) {
        let (f, _) = instance(2, fam, seed, false);
        let s = f.slope(&x).unwrap();
        let t = f.scale(lambda).unwrap().slope(&x).unwrap();
        prop_assert!((t - lambda * s).abs() <= 1e-9 * (1.0 + lambda * s));
    }

    #[test]
    fn slope_commutes_with_shift(seed in 0u64..10_000, fam in family(), x in point(2), t in point(2)) {
        let (f, _) = instance(2, fam, seed, false);
        let g = f.shift(&t).unwrap();
        let a = f.slope(&x).unwrap();
        let b = g.slope(&(&x + &t)).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a));
    }

    #[test]
    fn min_norm_subgradient_supports_f(seed in 0u64..10_000, fam in family(), x in point(3), d in point(3)) {
        // The min-norm subgradient supports f from below.
        let (f, _) = instance(3, fam, seed, false);
        let (v, s) = f.min_norm_subgradient(&x, &Default::default()).unwrap();
        prop_assert!((v.norm() - s).abs() < 1e-12);
        let y = &x + &d;
        prop_assert!(f.eval(&y).unwrap() >= f.eval(&x).unwrap() + v.dot(&d) - 1e-7 * (1.0 + d.norm()));
    }

    #[test]
    fn wolfe_point_is_optimal(pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..8)) {
        let gens: Vec<DVector<f64>> = pts.into_iter().map(DVector::from_vec).collect();
        let poly = Polytope::new(gens.clone(), None).unwrap();
        let mp = min_norm_point(&poly).unwrap();
        let total: f64 = mp.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(mp.weights.iter().all(|&w| w >= 0.0));
        let scale = gens.iter().map(|g| g.norm_squared()).fold(1.0f64, f64::max);
        prop_assert!(wolfe_gap(&poly, &mp.point) >= -1e-10 * scale);
    }

    #[test]
    fn prox_is_nonexpansive(seed in 0u64..10_000, fam in family(), x in point(2), y in point(2), h in 0.01f64..3.0) {
        let (f, _) = instance(2, fam, seed, false);
        let px = prox(&f, h, &x).unwrap();
        let py = prox(&f, h, &y).unwrap();
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-8);
    }

    #[test]
    fn prox_of_minimizer_is_fixed(seed in 0u64..10_000, fam in family(), h in 0.01f64..3.0) {
        let (f, _) = instance(2, fam, seed, true);
        let am = argmin(&f).unwrap();
        let p = prox(&f, h, &am.witness).unwrap();
        prop_assert!(f.eval(&p).unwrap() <= am.min_value + 1e-9 * (1.0 + am.min_value.abs()));
    }

    #[test]
    fn argmin_witness_has_zero_slope_nearby(seed in 0u64..10_000, fam in family()) {
        let (f, _) = instance(3, fam, seed, true);
        let am = argmin(&f).unwrap();
        prop_assert!(am.contains(&am.witness, 1e-9));
        prop_assert!(f.slope(&am.witness).unwrap() < 1e-6);
    }

    #[test]
    fn json_round_trip(seed in 0u64..10_000, fam in family(), n in 1usize..5) {
        let (f, _) = instance(n, fam, seed, false);
        let back = ConvexFunction::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(f.to_json(), back.to_json());
    }

    #[test]
    fn two_sided_from_one_sided(vals in prop::collection::vec(-5.0f64..5.0, 0..20)) {
        let neg: Vec<f64> = vals.iter().map(|x| -x).collect();
        let two = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert_eq!(one_sided_sup(&vals).max(one_sided_sup(&neg)), two);
    }

    #[test]
    fn ad1_is_convex_and_minimized_at_delta_star(
        s in 1e-4f64..2.0, val in 0.0f64..2.0, d in 1e-3f64..3.0, gap in 1e-3f64..3.0,
    ) {
        let t = DeviationTerms { slope_dev: s, value_dev: val, dist: d, gap };
        let ds = t.delta_star();
        prop_assert!((t.ad1(ds) - t.rhs_main()).abs() <= 1e-12 * (1.0 + t.rhs_main()));
        let grid = t.delta_grid();
        for w in grid.windows(3) {
            let mid = t.ad1(w[1]);
            let lam = (w[2] - w[1]) / (w[2] - w[0]);
            let chord = lam * t.ad1(w[0]) + (1.0 - lam) * t.ad1(w[2]);
            prop_assert!(mid <= chord + 1e-12 * chord);
        }
        let (_, m) = t.ad1_grid_min();
        prop_assert!((m - t.rhs_main()).abs() <= 1e-2 * t.rhs_main());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_properties_hold(seed in 0u64..10_000, fam in family(), n in 1usize..4, flat in any::<bool>()) {
        let (f, x) = instance(n, fam, seed, flat);
        let traj = integrate(&f, &x, &FlowOptions::default()).unwrap();
        prop_assert!(traj.termination.is_complete());
        let r = check_properties(&traj);
        prop_assert!(r.all_within(1e-6, 1e-9, 1e-6, 1e-8), "{:?}", r);
        let cert = lemma1_certificate(&f, &traj, 0.5 * traj.slopes[0].max(1e-12)).unwrap();
        prop_assert!(cert.passed);
        prop_assert!(cert.kn_ratio >= 1.0 - 1e-6);
    }

    #[test]
    fn reconstruction_ignores_constants(seed in 0u64..10_000, fam in family(), c in -5.0f64..5.0) {
        let (f, x) = instance(2, fam, seed, false);
        let g = f.add_constant(c);
        let tf = integrate(&f, &x, &FlowOptions::default()).unwrap();
        let tg = integrate(&g, &x, &FlowOptions::default()).unwrap();
        prop_assert_eq!(&tf.slopes, &tg.slopes);
        let a = reconstruct_value_gap(&f, &tf).unwrap().integral;
        let b = reconstruct_value_gap(&g, &tg).unwrap().integral;
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn generator_is_deterministic() {
    for fam in [Family::PureQuadratic, Family::MaxAffine, Family::Mixed] {
        let (f1, x1) = instance(3, fam, 99, true);
        let (f2, x2) = instance(3, fam, 99, true);
        assert_eq!(f1.to_json(), f2.to_json());
        assert_eq!(x1, x2);
    }
}
