use proptest::prelude::*;
use sg_spectral::monodromy::{lambda_k0, mu_k0, vacuum_monodromy, MonodromySolver};
use sg_spectral::potential::{cosine_potential, random_potential, translate_x, vacuum};
use sg_spectral::{Mat2, C64};
use std::f64::consts::PI;

fn dist(m: &Mat2, r: &Mat2) -> f64 {
    (*m - *r).norm_max()
}

/// λ with log-uniform modulus in [1e-3, 1e3] and argument in (−π, π).
fn arb_lambda() -> impl Strategy<Value = C64> {
    (-3.0f64..3.0, -0.97f64..0.97).prop_map(|(e, a)| C64::from_polar(10f64.powf(e), a * PI))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unimodular(seed in any::<u64>(), l in arb_lambda()) {
        let p = random_potential(seed, 3, 0.5, 0.7).unwrap();
        let m = MonodromySolver::new(&p).monodromy(l).unwrap();
        prop_assert!((m.det() - 1.0).norm() < 1e-9);
    }

    #[test]
    fn vacuum_matches_closed_form(l in arb_lambda()) {
        let m = MonodromySolver::new(&vacuum()).monodromy(l).unwrap();
        let m0 = vacuum_monodromy(l);
        prop_assert!(dist(&m, &m0) < 1e-8 * m0.norm_max());
    }

    #[test]
    fn trace_is_translation_invariant(seed in any::<u64>(), x0 in 0.0f64..1.0, l in arb_lambda()) {
        let p = random_potential(seed, 2, 0.4, 0.7).unwrap();
        let t = MonodromySolver::new(&p).monodromy(l).unwrap().trace();
        let s = MonodromySolver::new(&translate_x(&p, x0)).monodromy(l).unwrap().trace();
        prop_assert!((t - s).norm() < 1e-8 * (1.0 + t.norm()));
    }
}

#[test]
fn vacuum_identity_at_nodes() {
    let solver = MonodromySolver::new(&vacuum());
    for k in -8i64..=8 {
        let l = C64::new(lambda_k0(k), 0.0);
        let want = Mat2::identity().scale(C64::new(mu_k0(k), 0.0));
        assert!(dist(&vacuum_monodromy(l), &want) < 1e-8, "closed form at k = {k}");
        if l.re > 0.0 {
            // λ_{0,0} = −1 lies on the cut of the principal root
            assert!(dist(&solver.monodromy(l).unwrap(), &want) < 1e-8, "integrated at k = {k}");
        }
    }
}

#[test]
fn frame_starts_at_identity_and_ends_at_monodromy() {
    let p = cosine_potential(0.3);
    let solver = MonodromySolver::new(&p);
    let l = C64::new(3.0, 2.0);
    let f = solver.frames(l, &[0.0, 1.0]).unwrap();
    assert!(dist(&f[0], &Mat2::identity()) == 0.0);
    assert!(dist(&f[1], &solver.monodromy(l).unwrap()) < 1e-12);
}

/// ∂f/∂λ̄ by centred differences on a square of half-width h.
fn cr_residual(solver: &MonodromySolver, l0: C64, h: f64) -> [f64; 4] {
    let pts = [l0 + h, l0 - h, l0 + C64::new(0.0, h), l0 - C64::new(0.0, h)];
    let m = solver.batch(&pts).unwrap();
    let dx = |f: fn(&Mat2) -> C64| (f(&m[0]) - f(&m[1])) / (2.0 * h);
    let dy = |f: fn(&Mat2) -> C64| (f(&m[2]) - f(&m[3])) / (2.0 * h);
    let entries: [fn(&Mat2) -> C64; 4] = [|m| m.a, |m| m.b, |m| m.c, |m| m.d];
    entries.map(|f| (dx(f) + C64::i() * dy(f)).norm() / 2.0)
}

#[test]
fn entries_are_holomorphic() {
    let solver = MonodromySolver::new(&cosine_potential(0.3));
    for l0 in [C64::new(5.0, 3.0), C64::new(0.2, -0.1), C64::new(-40.0, 25.0)] {
        let h = 0.1 * l0.norm();
        let r1 = cr_residual(&solver, l0, h);
        let r2 = cr_residual(&solver, l0, h / 2.0);
        for i in 0..4 {
            // O(h²): halving h divides the residual by about 4
            let ratio = r1[i] / r2[i];
            assert!((3.0..5.0).contains(&ratio), "λ0 = {l0}, entry {i}: ratio {ratio}");
        }
    }
}
