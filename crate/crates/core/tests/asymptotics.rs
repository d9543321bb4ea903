use proptest::prelude::*;
use sg_spectral::asymptotics::{annulus_samples, bounding_sequence, l2nm_norm, thm_m_report, BoundingSequence};
use sg_spectral::monodromy::MonodromySolver;
use sg_spectral::potential::{cosine_potential, random_potential};
use sg_spectral::C64;

fn arb_seq() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 21)
}

fn indexed(v: &[f64]) -> Vec<(i64, f64)> {
    v.iter().enumerate().map(|(i, &x)| (i as i64 - 10, x)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weighted_norm_is_a_norm(a in arb_seq(), b in arb_seq(), s in -5.0f64..5.0, n in -3i32..4, m in -3i32..4) {
        let na = l2nm_norm(&indexed(&a), n, m);
        let nb = l2nm_norm(&indexed(&b), n, m);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
        prop_assert!(l2nm_norm(&indexed(&sum), n, m) <= na + nb + 1e-12 * (na + nb));
        prop_assert!((l2nm_norm(&indexed(&scaled), n, m) - s.abs() * na).abs() <= 1e-12 * (1.0 + s.abs() * na));
        prop_assert!(l2nm_norm(&indexed(&[0.0; 21]), n, m) == 0.0);
    }
}

fn samples(k_max: i64, angles: usize, f: &dyn Fn(C64) -> C64) -> Vec<(i64, C64, C64)> {
    let mut out = Vec::new();
    for k in -k_max..=k_max {
        for l in annulus_samples(k, 3, angles) {
            out.push((k, l, f(l)));
        }
    }
    out
}

#[test]
fn denser_sampling_certifies_without_violations() {
    let p = random_potential(9, 2, 0.3, 0.7).unwrap();
    let solver = MonodromySolver::new(&p);
    let f = |l: C64| solver.monodromy(l).map(|m| m.c);
    let coarse: BoundingSequence = bounding_sequence(&f, 1.0, 4, 3 * 12).unwrap();
    let dense: BoundingSequence = bounding_sequence(&f, 1.0, 4, 3 * 24).unwrap();
    let g = |l: C64| f(l).unwrap();
    let dense_pts = samples(4, 24, &g);
    assert_eq!(coarse.violations(&samples(4, 12, &g)), 0);
    assert_eq!(dense.violations(&dense_pts), 0);
    assert!(dense.violations(&dense_pts) <= coarse.violations(&dense_pts));
    assert!(dense.values.iter().all(|&(_, a)| a >= 0.0));
}

#[test]
fn norms_shrink_toward_vacuum() {
    let base = cosine_potential(1.0);
    let norms: Vec<[f64; 4]> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&e| thm_m_report(&base.scaled(e), 8).unwrap().norms())
        .collect();
    for w in norms.windows(2) {
        for i in 0..4 {
            assert!(w[1][i] < w[0][i], "norm {i}: {:?}", norms);
        }
    }
}
