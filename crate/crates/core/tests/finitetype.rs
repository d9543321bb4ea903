use sg_spectral::finitetype::{
    critical_points, finite_type_project, finite_type_project_auto, interp_delta, FiniteTypeOptions, FiniteTypeResult,
};
use sg_spectral::monodromy::mu_k0;
use sg_spectral::potential::{cosine_potential, random_potential};
use sg_spectral::spectral::{find_divisor, SpectralDivisor};

fn project(d: &SpectralDivisor, n: usize) -> FiniteTypeResult {
    finite_type_project(d, n, &FiniteTypeOptions::default()).unwrap()
}

/// max_{N<|k|≤K} |Δ*(η_k) − 2(−1)^k| recomputed from the returned divisor.
fn recomputed_defect(r: &FiniteTypeResult) -> f64 {
    let delta = interp_delta(&r.divisor).unwrap();
    let cs = critical_points(&delta, &FiniteTypeOptions::default()).unwrap();
    let kk = r.k_max as i64;
    (-kk..=kk)
        .filter(|k| k.unsigned_abs() as usize > r.n)
        .map(|k| (delta.eval(cs.get(k)) - 2.0 * mu_k0(k)).norm())
        .fold(0.0, f64::max)
}

#[test]
fn fixed_point_properties() {
    for (p, n) in [(cosine_potential(0.1), 3usize), (random_potential(2, 2, 0.2, 0.8).unwrap(), 4)] {
        let d = find_divisor(&p, 8).unwrap();
        let r = project(&d, n);
        assert!(r.defect < 1e-10, "defect {:e}", r.defect);
        let again = recomputed_defect(&r);
        assert!(again < 1e-8, "recomputed defect {again:e}");
        assert!(r.contraction < 1.0, "contraction {}", r.contraction);
        for (a, b) in d.entries.iter().zip(&r.divisor.entries) {
            if a.k.unsigned_abs() as usize <= n {
                assert_eq!(a, b, "entry k = {} must be preserved", a.k);
            }
        }
        // idempotence
        let twice = project(&r.divisor, n);
        assert_eq!(twice.iterations, 1);
        assert!(twice.defect < 1e-10);
    }
}

#[test]
fn auto_mode_starts_at_quarter_k() {
    let d = find_divisor(&cosine_potential(0.1), 16).unwrap();
    let r = finite_type_project_auto(&d, &FiniteTypeOptions::default()).unwrap();
    assert_eq!(r.n, 4);
    assert!(r.iterations <= 30);
}
