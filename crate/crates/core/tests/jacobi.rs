use proptest::prelude::*;
use sg_spectral::jacobi::{
    abel_integral, abel_map, curve_of, cycle_system, dual_forms, flow_x_check, flow_y_check, holomorphy_degrees,
    linspace, CurvePoint, DualFormBasis, FiniteGenusCurve, FlowOptions, Gap, PeriodLattice,
};
use sg_spectral::potential::{cosine_potential, make_potential, vacuum};
use sg_spectral::C64;
use std::collections::BTreeMap;

/// Real gaps (n, centre, half-width).
fn synthetic(gaps: &[(i64, f64, f64)]) -> FiniteGenusCurve {
    FiniteGenusCurve::new(
        gaps.iter()
            .map(|&(n, a, r)| Gap {
                n,
                e1: C64::new(a - r, 0.0),
                e2: C64::new(a + r, 0.0),
            })
            .collect(),
    )
    .unwrap()
}

fn genus_two() -> FiniteGenusCurve {
    synthetic(&[(-1, 0.0065, 0.001), (1, 155.9, 0.6)])
}

#[test]
fn model_curve_from_cosine_data() {
    let (curve, _) = curve_of(&cosine_potential(0.1), 2, 8, &FlowOptions::default()).unwrap();
    assert_eq!(curve.genus(), 2);
    let e = curve.branch_points();
    for i in 0..e.len() {
        assert!(e[i].norm() > 0.0);
        for j in i + 1..e.len() {
            assert!(e[i] != e[j]);
        }
    }
    // 100 samples spread over the plane
    let samples: Vec<C64> = (0..100)
        .map(|i| C64::from_polar(10f64.powf(-3.0 + 6.0 * i as f64 / 99.0), 0.37 + 0.61 * i as f64))
        .collect();
    let r = curve.branch_residual(&samples);
    assert!(r < 1e-12, "{r:e}");
}

#[test]
fn holomorphic_at_zero_and_infinity() {
    for g in 1..6 {
        for i in 0..g {
            let (d0, dinf) = holomorphy_degrees(g, i);
            assert_eq!((d0, dinf), (2 * i as i64, 2 * (g - i) as i64 - 2));
            assert!(d0 >= 0 && dinf >= 0);
        }
    }
}

#[test]
fn cycles_and_normalisation() {
    let curve = genus_two();
    assert!(cycle_system(&curve).is_canonical());
    let basis = dual_forms(&curve, 64).unwrap();
    for (k, raw) in basis.a_periods.iter().enumerate() {
        for (n, v) in basis.apply(raw).iter().enumerate() {
            let want = if k == n { 1.0 } else { 0.0 };
            assert!((v - want).norm() < 1e-10, "A_{k} ω_{n} = {v}");
        }
    }
    assert!(basis.symmetry_defect() < 1e-8);
    // Im β positive definite
    let b = &basis.b_periods;
    assert!(b[0][0].im > 0.0 && b[0][0].im * b[1][1].im - b[0][1].im * b[1][0].im > 0.0);
}

#[test]
fn doubling_the_nodes_changes_periods_negligibly() {
    let curve = genus_two();
    let (a, b): (DualFormBasis, DualFormBasis) = (dual_forms(&curve, 64).unwrap(), dual_forms(&curve, 128).unwrap());
    for (ra, rb) in a.b_periods.iter().zip(&b.b_periods) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).norm() < 1e-10, "{x} vs {y}");
        }
    }
}

/// ∫ ω from q to the end of the polyline, composite Simpson, continuing y
/// from q.y. Returns the integral and the endpoint with its continued y.
fn polyline_integral(curve: &FiniteGenusCurve, basis: &DualFormBasis, q: CurvePoint, legs: &[C64]) -> (Vec<C64>, CurvePoint) {
    let g = curve.genus();
    let mut raw = vec![C64::new(0.0, 0.0); g];
    let mut y = q.y;
    let mut from = q.lambda;
    for &to in legs {
        let n = 4000;
        let h = (to - from) / n as f64;
        for s in 0..=n {
            let l = from + h * s as f64;
            let mut c = curve.y2(l).sqrt();
            if (c + y).norm() < (c - y).norm() {
                c = -c;
            }
            y = c;
            let w = if s == 0 || s == n { 1.0 } else if s % 2 == 1 { 4.0 } else { 2.0 };
            let mut pw = C64::new(1.0, 0.0);
            for r in raw.iter_mut() {
                *r += pw / y * h * w / 3.0;
                pw *= l;
            }
        }
        from = to;
    }
    (basis.apply(&raw), CurvePoint { lambda: from, y })
}

#[test]
fn abel_integrals_are_path_independent_mod_lattice() {
    let curve = genus_two();
    let basis = dual_forms(&curve, 64).unwrap();
    let lattice = PeriodLattice::new(&basis);
    let gap = curve.gaps[1];
    let q = CurvePoint {
        lambda: gap.mid() + C64::new(0.3, 0.5),
        y: curve.y(gap.mid() + C64::new(0.3, 0.5)),
    };
    // detour above the gap, then down to the target
    let target = gap.mid() + C64::new(-0.4, -0.5);
    let legs = [q.lambda + C64::new(0.0, 2.0), target + C64::new(0.0, 2.5), target + C64::new(-1.5, 0.0), target];
    let (direct, p) = polyline_integral(&curve, &basis, q, &legs);
    let a = abel_integral(&curve, &basis, 1, p);
    let b = abel_integral(&curve, &basis, 1, q);
    let diff: Vec<C64> = (0..2).map(|n| a[n] - b[n] - direct[n]).collect();
    let red = lattice.reduce(&diff).unwrap();
    assert!(red.distance < 1e-8, "{:?}", red);
}

#[test]
fn abel_map_basics() {
    let curve = genus_two();
    let basis = dual_forms(&curve, 64).unwrap();
    let lattice = PeriodLattice::new(&basis);
    let pt = |j: usize, dz: C64| {
        let l = curve.gaps[j].mid() + dz;
        CurvePoint { lambda: l, y: curve.y(l) }
    };
    let d = [pt(0, C64::new(0.0, 0.0004)), pt(1, C64::new(0.2, 0.3))];
    let d1 = [pt(0, C64::new(0.0003, -0.0002)), pt(1, C64::new(-0.1, 0.4))];
    let d2 = [pt(0, C64::new(-0.0001, 0.0005)), pt(1, C64::new(0.5, -0.2))];
    let zero = abel_map(&curve, &basis, &d, &d).unwrap();
    assert!(zero.value.iter().all(|v| v.norm() == 0.0));
    // additivity over a chain of base divisors
    let ab = abel_map(&curve, &basis, &d, &d1).unwrap().value;
    let bc = abel_map(&curve, &basis, &d1, &d2).unwrap().value;
    let ac = abel_map(&curve, &basis, &d, &d2).unwrap().value;
    for n in 0..2 {
        assert!((ab[n] + bc[n] - ac[n]).norm() < 1e-12);
    }
    // a point plus its σ-image, both measured from a branch point, is in Γ
    for (j, p) in d.iter().enumerate() {
        let s = abel_integral(&curve, &basis, j, *p);
        let t = abel_integral(&curve, &basis, j, CurvePoint { lambda: p.lambda, y: -p.y });
        let sum: Vec<C64> = s.iter().zip(&t).map(|(a, b)| a + b).collect();
        assert!(lattice.reduce(&sum).unwrap().distance < 1e-8, "gap {j}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lattice_reduction_recovers_integers(m0 in -3i64..4, m1 in -3i64..4, n0 in -3i64..4, n1 in -3i64..4,
                                           r0 in -0.2f64..0.2, r1 in -0.2f64..0.2) {
        let basis = dual_forms(&genus_two(), 64).unwrap();
        let lat = PeriodLattice::new(&basis);
        let mut v = lat.point(&[m0, m1], &[n0, n1]);
        v[0] += C64::new(r0, 0.1 * r1);
        v[1] += C64::new(r1, -0.1 * r0);
        let red = lat.reduce(&v).unwrap();
        prop_assert_eq!(red.m.clone(), vec![m0, m1]);
        prop_assert_eq!(red.n.clone(), vec![n0, n1]);
        prop_assert!(red.m.iter().chain(&red.n).all(|x| x.abs() <= 3));
    }
}

#[test]
fn vacuum_has_no_open_gaps() {
    let r = flow_x_check(&vacuum(), 2, &linspace(0.0, 1.0, 5), 6).unwrap();
    assert_eq!(r.genus, 0);
    assert!(r.slopes.is_empty());
}

#[test]
fn constant_data_genus_one() {
    // u_y ≠ 0 opens the k = 0 gap; x-translation leaves the data unchanged
    let p = make_potential(
        &BTreeMap::from([(0, C64::new(0.2, 0.0))]),
        &BTreeMap::from([(0, C64::new(0.1, 0.0))]),
    )
    .unwrap();
    let fx = flow_x_check(&p, 1, &linspace(0.0, 1.0, 5), 8).unwrap();
    assert_eq!((fx.genus, fx.gaps.clone()), (1, vec![0]));
    assert!(fx.ranges[0] < 1e-10);
    let fy = flow_y_check(&p, 1, &linspace(-0.05, 0.05, 11), 8).unwrap();
    assert!(fy.rel_residuals[0] < 5e-3, "{:?}", fy.rel_residuals);
    assert!(fy.ranges[0] > 1e-4);
}

#[test]
fn x_flow_fit_is_independent_of_sampling() {
    // the residual is truncation error of the finite-genus model: it must
    // not depend on the sampling density, and must shrink with the genus
    let p = cosine_potential(0.1);
    let r1 = flow_x_check(&p, 2, &linspace(0.0, 1.0, 17), 8).unwrap();
    let r2 = flow_x_check(&p, 2, &linspace(0.0, 1.0, 33), 8).unwrap();
    for n in 0..2 {
        let (a, b) = (r1.rel_residuals[n], r2.rel_residuals[n]);
        assert!((a - b).abs() < 0.1 * a.max(b), "{a:e} vs {b:e}");
        assert!((r1.slopes[n] - r2.slopes[n]).norm() < 1e-6);
    }
    let l = r2.lattice.as_ref().unwrap();
    assert_eq!(l.m, vec![-1, -1]);
    assert!(l.distance < 1e-3);
    let r3 = flow_x_check(&p, 3, &linspace(0.0, 1.0, 17), 8).unwrap();
    let g2 = r1.gaps.iter().position(|&n| n == 1).unwrap();
    let g3 = r3.gaps.iter().position(|&n| n == 1).unwrap();
    assert!(r3.rel_residuals[g3] < r1.rel_residuals[g2]);
}
