use proptest::prelude::*;
use sg_spectral::io::{from_json, to_json, PotentialJson};
use sg_spectral::potential::{
    constant_potential, cosine_potential, evaluate, evolve_y, make_potential, pot_norm, random_potential, translate_x,
    vacuum,
};
use sg_spectral::{PeriodicPotential, C64};
use std::collections::BTreeMap;

fn arb_potential() -> impl Strategy<Value = PeriodicPotential> {
    (any::<u64>(), 0i64..6, 0.01f64..1.0, 0.2f64..1.5)
        .prop_map(|(seed, j, amp, rate)| random_potential(seed, j, amp, rate).unwrap())
}

fn max_coeff_diff(p: &PeriodicPotential, q: &PeriodicPotential) -> f64 {
    let jj = p.band_limit().max(q.band_limit()) as i64;
    (-jj..=jj)
        .map(|j| (p.u_coeff(j) - q.u_coeff(j)).norm().max((p.uy_coeff(j) - q.uy_coeff(j)).norm()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn periodic_in_x(p in arb_potential(), x in 0.0f64..1.0) {
        assert_eq!(evaluate(&p, 0.0), evaluate(&p, 1.0));
        let (a, b) = (evaluate(&p, x), evaluate(&p, x + 1.0));
        prop_assert!((a.0 - b.0).norm() < 1e-12);
        prop_assert!((a.2 - b.2).norm() < 1e-12);
    }

    #[test]
    fn translation_preserves_norm(p in arb_potential(), x0 in -3.0f64..3.0) {
        let n = pot_norm(&p);
        prop_assert!((pot_norm(&translate_x(&p, x0)) - n).abs() <= 1e-12 * (1.0 + n));
    }

    #[test]
    fn translation_shifts_argument(p in arb_potential(), x0 in 0.0f64..1.0, x in 0.0f64..1.0) {
        let (a, ax, ay) = evaluate(&translate_x(&p, x0), x);
        let (b, bx, by) = evaluate(&p, x + x0);
        prop_assert!((a - b).norm() < 1e-12);
        prop_assert!((ax - bx).norm() < 1e-10);
        prop_assert!((ay - by).norm() < 1e-12);
    }

    #[test]
    fn translations_compose(p in arb_potential(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let two = translate_x(&translate_x(&p, s), t);
        prop_assert!(max_coeff_diff(&two, &translate_x(&p, s + t)) < 1e-12);
    }

    #[test]
    fn coefficient_json_round_trips(p in arb_potential()) {
        let text = to_json(&PotentialJson::from(&p)).unwrap();
        let back = from_json::<PotentialJson>(&text).unwrap().build().unwrap();
        prop_assert_eq!(back, p);
    }
}

#[test]
fn translation_by_a_period_is_identity() {
    let p = random_potential(3, 4, 0.4, 0.5).unwrap();
    assert!(max_coeff_diff(&translate_x(&p, 1.0), &p) < 1e-13);
}

/// Analytic data with both u and u_y nonzero.
fn analytic_data() -> PeriodicPotential {
    let u = BTreeMap::from([(0, C64::new(0.1, 0.0)), (1, C64::new(0.1, 0.0)), (-1, C64::new(0.1, 0.0))]);
    let uy = BTreeMap::from([(1, C64::new(0.0, 0.05)), (-1, C64::new(0.0, -0.05))]);
    make_potential(&u, &uy).unwrap()
}

#[test]
fn evolve_round_trip_improves_with_steps() {
    let p = analytic_data();
    let y = 0.02;
    let mut errs = Vec::new();
    for n in [10usize, 20, 40] {
        let fwd = evolve_y(&p, y, n, 12).unwrap();
        let back = evolve_y(&fwd, -y, n, 12).unwrap();
        let e = max_coeff_diff(&back, &p);
        // the splitting is second order; allow the round trip the same rate
        assert!(e < 1e-6 * (10.0 / n as f64).powi(2), "n = {n}: {e:e}");
        errs.push(e);
    }
    assert!(errs.iter().all(|e| e.is_finite()));
}

#[test]
fn evolve_vacuum_stays_vacuum() {
    let q = evolve_y(&vacuum(), 0.05, 10, 8).unwrap();
    assert!(max_coeff_diff(&q, &vacuum()) == 0.0);
}

/// RK4 oracle for spatially constant data: u'' = −sinh u.
fn pendulum(u0: f64, v0: f64, y: f64, n: usize) -> (f64, f64) {
    let h = y / n as f64;
    let f = |u: f64, v: f64| (v, -u.sinh());
    let (mut u, mut v) = (u0, v0);
    for _ in 0..n {
        let (k1u, k1v) = f(u, v);
        let (k2u, k2v) = f(u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let (k3u, k3v) = f(u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let (k4u, k4v) = f(u + h * k3u, v + h * k3v);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    (u, v)
}

#[test]
fn constant_data_follow_the_scalar_ode() {
    let (u0, v0, y) = (0.7, -0.3, 0.5);
    let p = make_potential(&BTreeMap::from([(0, C64::new(u0, 0.0))]), &BTreeMap::from([(0, C64::new(v0, 0.0))])).unwrap();
    let (ue, ve) = pendulum(u0, v0, y, 20_000);
    let mut errs = Vec::new();
    for n in [10usize, 20, 40] {
        let q = evolve_y(&p, y, n, 4).unwrap();
        let e = (q.u_coeff(0) - ue).norm().max((q.uy_coeff(0) - ve).norm());
        assert!(q.u_coeff(1).norm() == 0.0);
        errs.push(e);
    }
    // Strang splitting: error ratio 4 per halving
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..4.5).contains(&r), "ratio {r} from {errs:?}");
    }
}

#[test]
fn constructors_agree() {
    let c = constant_potential(C64::new(0.2, 0.0));
    assert_eq!(evaluate(&c, 0.37).0, C64::new(0.2, 0.0));
    let p = cosine_potential(0.3);
    assert!((evaluate(&p, 0.5).0 - C64::new(-0.3, 0.0)).norm() < 1e-15);
}
