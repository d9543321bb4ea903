//! Finite-genus truncations of the spectral curve: cycles, normalized
//! holomorphic differentials, the Abel map and the linear-flow checks.
//!
//! The model is y² = λ·∏(λ − e_j) over the endpoints of the selected open
//! gaps. y is single-valued off the cuts (one segment per gap plus a ray from
//! 0 to ∞); all path integrals continue y analytically along the path, so a
//! curve point is just a pair (λ, y) and never needs a sheet label.

use crate::error::{Result, SpectralError};
use crate::linalg::{condition_1, invert_complex, solve_real};
use crate::par;
use crate::monodromy::{node_spacing, MonodromySolver};
use crate::potential::{evolve_y, translate_x, PeriodicPotential};
use crate::spectral::{divisor_entry, find_branch_points_with, BranchPointSet, DivisorEntry, SpectralOptions};
use gauss_quad::GaussLegendre;
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

/// One open gap; `e1` is the endpoint nearer to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub n: i64,
    pub e1: C64,
    pub e2: C64,
}

impl Gap {
    pub fn mid(&self) -> C64 {
        (self.e1 + self.e2) * 0.5
    }

    /// Half the oriented gap, e2 − mid.
    pub fn half(&self) -> C64 {
        (self.e2 - self.e1) * 0.5
    }

    /// √((λ − e1)(λ − e2)) with its cut on the segment, ~ λ − mid at ∞.
    fn h(&self, lambda: C64) -> C64 {
        let w = lambda - self.mid();
        let r = self.half();
        if w.norm() == 0.0 {
            return C64::new(0.0, 1.0) * r;
        }
        w * (1.0 - (r / w) * (r / w)).sqrt()
    }

    /// `h` with λ given as e + δ for an endpoint e of this gap; the
    /// subtraction λ − e would lose δ's relative accuracy next to large e.
    fn h_near(&self, lambda: C64, e: C64, delta: C64) -> C64 {
        let w = lambda - self.mid();
        let r = self.half();
        // (λ − e1)(λ − e2) = δ(δ ∓ 2r), same branch as w√(1 − r²/w²)
        let s = if e == self.e1 { delta * (delta - 2.0 * r) } else { delta * (delta + 2.0 * r) };
        w * (s / (w * w)).sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteGenusCurve {
    pub gaps: Vec<Gap>,
    /// Direction of the cut from 0 to ∞.
    pub cut_angle: f64,
    sign: f64,
}

fn seg_dist(p: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let t = if d.norm_sqr() > 0.0 {
        (((p - a) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + d * t)).norm()
}

fn cross2(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Proper crossing of segments [p1,p2] and [q1,q2]: sign of the tangent
/// pair, 0 if they do not cross transversally.
fn seg_cross(p1: C64, p2: C64, q1: C64, q2: C64) -> i64 {
    let d1 = cross2(q2 - q1, p1 - q1);
    let d2 = cross2(q2 - q1, p2 - q1);
    let d3 = cross2(p2 - p1, q1 - p1);
    let d4 = cross2(p2 - p1, q2 - p1);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        cross2(p2 - p1, q2 - q1).signum() as i64
    } else {
        0
    }
}

fn segments_dist(a1: C64, a2: C64, b1: C64, b2: C64) -> f64 {
    if seg_cross(a1, a2, b1, b2) != 0 {
        return 0.0;
    }
    seg_dist(a1, b1, b2)
        .min(seg_dist(a2, b1, b2))
        .min(seg_dist(b1, a1, a2))
        .min(seg_dist(b2, a1, a2))
}

impl FiniteGenusCurve {
    /// Curve from explicit gaps (endpoint order is normalized).
    pub fn new(mut gaps: Vec<Gap>) -> Result<Self> {
        for g in gaps.iter_mut() {
            if g.e2.norm() < g.e1.norm() {
                std::mem::swap(&mut g.e1, &mut g.e2);
            }
            if g.e1 == g.e2 {
                return Err(SpectralError::Degenerate(format!("gap {} is closed", g.n)));
            }
            if seg_dist(C64::new(0.0, 0.0), g.e1, g.e2) < 1e-3 * g.half().norm() {
                return Err(SpectralError::InvalidInput(format!("gap {} contains 0", g.n)));
            }
        }
        for i in 0..gaps.len() {
            for j in 0..i {
                let (a, b) = (gaps[i], gaps[j]);
                if segments_dist(a.e1, a.e2, b.e1, b.e2) < 1e-3 * a.half().norm().min(b.half().norm()) {
                    return Err(SpectralError::InvalidInput(format!("cuts of gaps {} and {} overlap", a.n, b.n)));
                }
            }
        }
        // the (0, ∞) cut: negative real axis unless a gap sits near it
        let far = gaps.iter().fold(1.0f64, |m, g| m.max(g.e1.norm()).max(g.e2.norm())) * 4.0;
        let clear = |th: f64| {
            let end = C64::from_polar(far, th);
            gaps.iter()
                .all(|g| segments_dist(C64::new(0.0, 0.0), end, g.e1, g.e2) > 0.5 * g.half().norm())
        };
        let cut_angle = [PI, -PI / 2.0, -3.0 * PI / 4.0, -PI / 4.0]
            .into_iter()
            .find(|&t| clear(t))
            .ok_or_else(|| SpectralError::InvalidInput("no admissible ray for the (0, ∞) cut".into()))?;
        let mut c = FiniteGenusCurve {
            gaps,
            cut_angle,
            sign: 1.0,
        };
        // sheet fixed by y > 0 right of all gaps on the positive axis
        let lref = C64::new(far, 0.0);
        if c.y(lref).re < 0.0 {
            c.sign = -1.0;
        }
        Ok(c)
    }

    pub fn genus(&self) -> usize {
        self.gaps.len()
    }

    /// All finite nonzero branch points.
    pub fn branch_points(&self) -> Vec<C64> {
        self.gaps.iter().flat_map(|g| [g.e1, g.e2]).collect()
    }

    pub fn y2(&self, lambda: C64) -> C64 {
        self.gaps
            .iter()
            .fold(lambda, |acc, g| acc * (lambda - g.e1) * (lambda - g.e2))
    }

    /// √λ with its cut along the ray at `cut_angle`.
    pub fn sqrt_lambda(&self, lambda: C64) -> C64 {
        let rot = C64::from_polar(1.0, self.cut_angle - PI);
        C64::from_polar(1.0, (self.cut_angle - PI) / 2.0) * (lambda / rot).sqrt()
    }

    /// y on the reference sheet, continuous off the cuts.
    pub fn y(&self, lambda: C64) -> C64 {
        self.y_without(usize::MAX, lambda)
    }

    /// y with the factor of gap `skip` removed (continuous across that gap).
    fn y_without(&self, skip: usize, lambda: C64) -> C64 {
        let mut acc = self.sqrt_lambda(lambda) * self.sign;
        for (i, g) in self.gaps.iter().enumerate() {
            if i != skip {
                acc *= g.h(lambda);
            }
        }
        acc
    }

    /// y at λ = e + δ for a gap endpoint e, accurate in δ when |δ| ≪ |e|.
    fn y_near(&self, lambda: C64, e: C64, delta: C64) -> C64 {
        let mut acc = self.sqrt_lambda(lambda) * self.sign;
        for g in &self.gaps {
            acc *= if e == g.e1 || e == g.e2 { g.h_near(lambda, e, delta) } else { g.h(lambda) };
        }
        acc
    }

    /// max |y² − λ∏(λ − e)| / |y²| over the samples.
    pub fn branch_residual(&self, samples: &[C64]) -> f64 {
        samples
            .iter()
            .map(|&z| {
                let y = self.y(z);
                let p = self.y2(z);
                (y * y - p).norm() / p.norm().max(1e-300)
            })
            .fold(0.0, f64::max)
    }
}

/// Relative gap size |κ₁ − κ₂| / spacing.
fn rel_gap(b: &crate::spectral::BranchPair) -> f64 {
    b.gap() / node_spacing(b.k)
}

/// Annuli of the `count` largest open gaps (relative to the node spacing).
pub fn largest_gaps(b: &BranchPointSet, count: usize) -> Vec<i64> {
    let mut open: Vec<_> = b.pairs.iter().filter(|p| !p.double).collect();
    open.sort_by(|x, y| rel_gap(y).total_cmp(&rel_gap(x)));
    let mut ks: Vec<i64> = open.iter().take(count).map(|p| p.k).collect();
    ks.sort();
    ks
}

pub fn make_curve(b: &BranchPointSet, open: &[i64]) -> Result<FiniteGenusCurve> {
    let mut gaps = Vec::new();
    for &k in open {
        let p = b
            .get(k)
            .ok_or_else(|| SpectralError::InvalidInput(format!("no branch pair at k = {k}")))?;
        if p.double {
            return Err(SpectralError::Degenerate(format!("gap {k} is a double point")));
        }
        gaps.push(Gap {
            n: k,
            e1: p.kappa1,
            e2: p.kappa2,
        });
    }
    FiniteGenusCurve::new(gaps)
}

/// Degrees of λ^i dλ/y in the local coordinates at 0 and ∞.
pub fn holomorphy_degrees(genus: usize, i: usize) -> (i64, i64) {
    (2 * i as i64, 2 * genus as i64 - 2 * i as i64 - 2)
}

pub const DEFAULT_NODES: usize = 64;

/// ∫_{A_k} λ^i dλ/y (counter-clockwise around gap k on the reference sheet),
/// Gauss–Chebyshev with `m` nodes; row k, column i.
pub fn a_periods(curve: &FiniteGenusCurve, m: usize) -> Vec<Vec<C64>> {
    let g = curve.genus();
    (0..g)
        .map(|k| {
            let gap = curve.gaps[k];
            let mut row = vec![C64::new(0.0, 0.0); g];
            for j in 0..m {
                let t = ((2 * j + 1) as f64 * PI / (2 * m) as f64).cos();
                let l = gap.mid() + gap.half() * t;
                let q = curve.y_without(k, l);
                let mut p = C64::new(1.0, 0.0);
                for r in row.iter_mut() {
                    *r += p / q;
                    p *= l;
                }
            }
            // boundary value of the gap factor on the left side is iρ√(1−t²)
            row.iter().map(|v| v * C64::new(0.0, 2.0) * PI / m as f64).collect()
        })
        .collect()
}

/// Oracle for the A-periods: trapezoidal rule on an ellipse around the gap.
pub fn a_periods_contour(curve: &FiniteGenusCurve, m: usize) -> Vec<Vec<C64>> {
    let g = curve.genus();
    (0..g)
        .map(|k| {
            let gap = curve.gaps[k];
            let (b, r) = (0.5f64, gap.half());
            let mut row = vec![C64::new(0.0, 0.0); g];
            for j in 0..m {
                let th = 2.0 * PI * j as f64 / m as f64;
                let l = gap.mid() + r * C64::new(b.cosh() * th.cos(), b.sinh() * th.sin());
                let dl = r * C64::new(-b.cosh() * th.sin(), b.sinh() * th.cos());
                let y = curve.y(l);
                let mut p = C64::new(1.0, 0.0);
                for v in row.iter_mut() {
                    *v += p * dl / y;
                    p *= l;
                }
            }
            row.iter().map(|v| v * 2.0 * PI / m as f64).collect()
        })
        .collect()
}

/// Gauss–Legendre nodes and weights on [0, 1].
fn gl01(m: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(m.max(1)).expect("positive"))
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// ∫ along the polyline of λ^i dλ/y (i < g) with the reference-sheet y; the
/// first and last vertices may be branch points (√ substitution there).
fn path_integrals(curve: &FiniteGenusCurve, path: &[C64], m: usize) -> Vec<C64> {
    let g = curve.genus();
    let bps: Vec<C64> = std::iter::once(C64::new(0.0, 0.0)).chain(curve.branch_points()).collect();
    let nodes = gl01(m);
    let mut acc = vec![C64::new(0.0, 0.0); g];
    // graded pieces: each no longer than its distance to other branch points
    let mut pieces: Vec<(C64, C64, bool, bool)> = Vec::new();
    let nseg = path.len() - 1;
    for s in 0..nseg {
        let mut stack = vec![(path[s], path[s + 1], s == 0, s + 1 == nseg, 0usize)];
        while let Some((a, b, sa, sb, depth)) = stack.pop() {
            let d = bps
                .iter()
                .filter(|&&e| !((sa && (e - a).norm() < 1e-300) || (sb && (e - b).norm() < 1e-300)))
                .map(|&e| seg_dist(e, a, b))
                .fold(f64::INFINITY, f64::min);
            if (b - a).norm() > d && depth < 60 {
                let c = (a + b) * 0.5;
                stack.push((c, b, false, sb, depth + 1));
                stack.push((a, c, sa, false, depth + 1));
            } else {
                pieces.push((a, b, sa, sb));
            }
        }
    }
    for (a, b, sa, sb) in pieces {
        let d = b - a;
        for &(v, w) in &nodes {
            // t(v) and dt/dv with √ substitution at singular ends, and the
            // offsets λ − a, λ − b formed without cancellation
            let (t, dt, da, db) = match (sa, sb) {
                (true, false) => (v * v, 2.0 * v, v * v, 0.0),
                (false, true) => (1.0 - v * v, 2.0 * v, 0.0, -v * v),
                (true, true) => (
                    v * v * (3.0 - 2.0 * v),
                    6.0 * v * (1.0 - v),
                    v * v * (3.0 - 2.0 * v),
                    -(1.0 - v) * (1.0 - v) * (1.0 + 2.0 * v),
                ),
                _ => (v, 1.0, 0.0, 0.0),
            };
            let l = a + d * t;
            let y = if sa && (!sb || da <= -db) {
                curve.y_near(l, a, d * da)
            } else if sb {
                curve.y_near(l, b, d * db)
            } else {
                curve.y(l)
            };
            let f = d * dt * w / y;
            let mut p = C64::new(1.0, 0.0);
            for x in acc.iter_mut() {
                *x += p * f;
                p *= l;
            }
        }
    }
    acc
}

/// Polyline of B_j on the reference sheet from 0 to the inner endpoint e1
/// of gap j, through the upper half-plane.
pub fn b_path(curve: &FiniteGenusCurve, j: usize) -> Vec<C64> {
    let gap = curve.gaps[j];
    let out = (gap.e1 - gap.mid()) / (gap.e1 - gap.mid()).norm();
    let q = gap.e1 + out * 0.5 * gap.half().norm();
    let h = 0.5 * gap.e1.norm().max(q.norm());
    vec![
        C64::new(0.0, 0.0),
        C64::new(0.0, h),
        C64::new(q.re, h.max(q.im + 0.5 * h)),
        q,
        gap.e1,
    ]
}

/// Counter-clockwise ellipse around gap j (foci at the endpoints).
pub fn a_loop(curve: &FiniteGenusCurve, j: usize, m: usize) -> Vec<C64> {
    let gap = curve.gaps[j];
    let b = 0.5f64;
    (0..m)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / m as f64;
            gap.mid() + gap.half() * C64::new(b.cosh() * th.cos(), b.sinh() * th.sin())
        })
        .collect()
}

fn path_crossings(a: &[C64], a_closed: bool, b: &[C64], b_closed: bool) -> i64 {
    let segs = |p: &[C64], closed: bool| -> Vec<(C64, C64)> {
        let mut v: Vec<(C64, C64)> = p.windows(2).map(|w| (w[0], w[1])).collect();
        if closed {
            v.push((p[p.len() - 1], p[0]));
        }
        v
    };
    let (sa, sb) = (segs(a, a_closed), segs(b, b_closed));
    let mut n = 0;
    for &(p1, p2) in &sa {
        for &(q1, q2) in &sb {
            n += seg_cross(p1, p2, q1, q2);
        }
    }
    n
}

fn winding(lp: &[C64], z: C64) -> i64 {
    let mut tot = 0.0;
    for i in 0..lp.len() {
        let a = lp[i] - z;
        let b = lp[(i + 1) % lp.len()] - z;
        tot += (b / a).arg();
    }
    (tot / (2.0 * PI)).round() as i64
}

#[derive(Debug, Clone, Serialize)]
pub struct CycleSystem {
    pub a_loops: Vec<Vec<C64>>,
    pub b_paths: Vec<Vec<C64>>,
    /// Signed crossings A_k × B_l of the planar realizations.
    pub ab: Vec<Vec<i64>>,
    pub aa: Vec<Vec<i64>>,
    pub bb: Vec<Vec<i64>>,
    /// Winding of A_k around every branch point (0 first, then e's).
    pub a_winding: Vec<Vec<i64>>,
}

impl CycleSystem {
    /// A×B = identity, A×A = B×B = 0, each A_k encircles exactly its gap.
    pub fn is_canonical(&self) -> bool {
        let g = self.ab.len();
        (0..g).all(|k| {
            (0..g).all(|l| {
                self.ab[k][l] == i64::from(k == l) && (k == l || (self.aa[k][l] == 0 && self.bb[k][l] == 0))
            }) && self.a_winding[k]
                .iter()
                .enumerate()
                .all(|(i, &w)| w == i64::from(i == 2 * k + 1 || i == 2 * k + 2))
        })
    }
}

/// Planar cycle realizations and their intersection certificates. B paths
/// share the start at 0 and are compared on their interiors only.
pub fn cycle_system(curve: &FiniteGenusCurve) -> CycleSystem {
    let g = curve.genus();
    let a: Vec<Vec<C64>> = (0..g).map(|j| a_loop(curve, j, 256)).collect();
    let b: Vec<Vec<C64>> = (0..g).map(|j| b_path(curve, j)).collect();
    let grid = |f: &dyn Fn(usize, usize) -> i64| -> Vec<Vec<i64>> { (0..g).map(|k| (0..g).map(|l| f(k, l)).collect()).collect() };
    // B_l runs from 0 into gap l on the reference sheet; crossing A_k
    // inwards is +1 for a counter-clockwise A_k
    let ab = grid(&|k, l| path_crossings(&a[k], true, &b[l], false));
    let aa = grid(&|k, l| if k == l { 0 } else { path_crossings(&a[k], true, &a[l], true) });
    let bb = grid(&|k, l| if k == l { 0 } else { path_crossings(&b[k][1..], false, &b[l][1..], false) });
    let bps: Vec<C64> = std::iter::once(C64::new(0.0, 0.0)).chain(curve.branch_points()).collect();
    let a_winding = a.iter().map(|lp| bps.iter().map(|&z| winding(lp, z)).collect()).collect();
    CycleSystem {
        a_loops: a,
        b_paths: b,
        ab,
        aa,
        bb,
        a_winding,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualFormBasis {
    /// ω_n = Σ_i coeffs[n][i] λ^i dλ/y.
    pub coeffs: Vec<Vec<C64>>,
    /// ∫_{A_k} λ^i dλ/y, row k.
    pub a_periods: Vec<Vec<C64>>,
    /// β[n][k] = ∫_{B_k} ω_n.
    pub b_periods: Vec<Vec<C64>>,
    /// A-cycle multiples added to the planar B paths, c[n][k] for B_k.
    pub b_correction: Vec<Vec<i64>>,
    pub cond: f64,
    pub nodes: usize,
}

impl DualFormBasis {
    pub fn genus(&self) -> usize {
        self.coeffs.len()
    }

    /// (Σ_i c_{ni} x_i)_n for raw integrals x_i of λ^i dλ/y.
    pub fn apply(&self, raw: &[C64]) -> Vec<C64> {
        self.coeffs
            .iter()
            .map(|row| row.iter().zip(raw).map(|(c, x)| c * x).sum())
            .collect()
    }

    /// max |β − βᵀ|, the Riemann symmetry defect.
    pub fn symmetry_defect(&self) -> f64 {
        let g = self.genus();
        let mut d = 0.0f64;
        for n in 0..g {
            for k in 0..g {
                d = d.max((self.b_periods[n][k] - self.b_periods[k][n]).norm());
            }
        }
        d
    }
}

pub fn dual_forms(curve: &FiniteGenusCurve, nodes: usize) -> Result<DualFormBasis> {
    let g = curve.genus();
    if g == 0 {
        return Err(SpectralError::InvalidInput("genus 0 curve has no holomorphic forms".into()));
    }
    let p = a_periods(curve, nodes);
    let pt: Vec<Vec<C64>> = (0..g).map(|i| (0..g).map(|k| p[k][i]).collect()).collect();
    let cond = condition_1(&pt);
    let coeffs = invert_complex(&pt)
        .filter(|_| cond.is_finite() && cond < 1e14)
        .ok_or(SpectralError::IllConditioned {
            what: "A-period matrix".into(),
            cond,
        })?;
    let mut basis = DualFormBasis {
        coeffs,
        a_periods: p,
        b_periods: Vec::new(),
        b_correction: Vec::new(),
        cond,
        nodes,
    };
    let cols: Vec<Vec<C64>> = (0..g)
        .map(|k| {
            let raw = path_integrals(curve, &b_path(curve, k), nodes);
            basis.apply(&raw).into_iter().map(|v| v * 2.0).collect()
        })
        .collect();
    let mut beta: Vec<Vec<C64>> = (0..g).map(|n| (0..g).map(|k| cols[k][n]).collect()).collect();
    // The lifted B paths all pass through the branch point 0 and meet there;
    // B_k + Σ_{n<k} c_nk A_n restores B·B = 0, with c read off the integer
    // asymmetry of Re β.
    let mut corr = vec![vec![0i64; g]; g];
    for k in 0..g {
        for n in 0..k {
            let c = (beta[k][n] - beta[n][k]).re.round() as i64;
            corr[n][k] = c;
            beta[n][k] += c as f64;
        }
    }
    basis.b_periods = beta;
    basis.b_correction = corr;
    Ok(basis)
}

/// Γ = ℤ^g + β ℤ^g.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodLattice {
    pub beta: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeReduction {
    pub m: Vec<i64>,
    pub n: Vec<i64>,
    /// v − (m + βn).
    pub residual: Vec<C64>,
    pub distance: f64,
}

impl PeriodLattice {
    pub fn new(basis: &DualFormBasis) -> Self {
        PeriodLattice {
            beta: basis.b_periods.clone(),
        }
    }

    pub fn point(&self, m: &[i64], n: &[i64]) -> Vec<C64> {
        (0..m.len())
            .map(|r| C64::new(m[r] as f64, 0.0) + (0..n.len()).map(|k| self.beta[r][k] * n[k] as f64).sum::<C64>())
            .collect()
    }

    /// Round the real coordinates of v in the basis (I, β).
    pub fn reduce(&self, v: &[C64]) -> Result<LatticeReduction> {
        let g = v.len();
        let a: Vec<Vec<f64>> = (0..g).map(|r| (0..g).map(|k| self.beta[r][k].im).collect()).collect();
        let n_real = solve_real(a, v.iter().map(|z| z.im).collect())
            .ok_or_else(|| SpectralError::Degenerate("Im β is singular".into()))?;
        let n: Vec<i64> = n_real.iter().map(|x| x.round() as i64).collect();
        let m: Vec<i64> = (0..g)
            .map(|r| {
                let s: f64 = (0..g).map(|k| self.beta[r][k].re * n[k] as f64).sum();
                (v[r].re - s).round() as i64
            })
            .collect();
        let lp = self.point(&m, &n);
        let residual: Vec<C64> = v.iter().zip(&lp).map(|(a, b)| a - b).collect();
        let distance = residual.iter().fold(0.0f64, |d, z| d.max(z.norm()));
        Ok(LatticeReduction { m, n, residual, distance })
    }
}

/// A point of the model curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub lambda: C64,
    pub y: C64,
}

/// Raw integrals ∫_e^p λ^i dλ/y along the segment from the branch point
/// `e` to p, continuing y back from p.y.
fn segment_from_branch(curve: &FiniteGenusCurve, e: C64, p: CurvePoint, m: usize) -> Vec<C64> {
    let g = curve.genus();
    let d = p.lambda - e;
    if d.norm() == 0.0 {
        return vec![C64::new(0.0, 0.0); g];
    }
    // y(e + t d)² = t · d · R(e + t d), R = y²/(λ − e)
    let r = |l: C64| -> C64 {
        let mut acc = l;
        for gp in &curve.gaps {
            for x in [gp.e1, gp.e2] {
                if x != e {
                    acc *= l - x;
                }
            }
        }
        acc
    };
    let mut nodes = gl01(m);
    nodes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = vec![C64::new(0.0, 0.0); g];
    let mut prev = p.y;
    for (v, w) in nodes {
        let t = v * v;
        let l = e + d * t;
        let g2 = d * r(l);
        let mut gv = g2.sqrt();
        if (gv + prev).norm() < (gv - prev).norm() {
            gv = -gv;
        }
        prev = gv;
        // dλ/y = d · 2v dv / (v · g) = 2d dv / g
        let f = d * 2.0 * w / gv;
        let mut pw = C64::new(1.0, 0.0);
        for x in acc.iter_mut() {
            *x += pw * f;
            pw *= l;
        }
    }
    acc
}

/// ∫ ω from the inner endpoint of gap j to p, modulo Γ; the path runs
/// through the nearer endpoint (half an A-period between the endpoints).
pub fn abel_integral(curve: &FiniteGenusCurve, basis: &DualFormBasis, j: usize, p: CurvePoint) -> Vec<C64> {
    let gap = curve.gaps[j];
    let via_e2 = (p.lambda - gap.e2).norm() < (p.lambda - gap.e1).norm();
    let base = if via_e2 { gap.e2 } else { gap.e1 };
    let mut v = basis.apply(&segment_from_branch(curve, base, p, basis.nodes));
    if via_e2 {
        v[j] += 0.5;
    }
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct AbelResult {
    pub value: Vec<C64>,
    pub reduced: LatticeReduction,
}

/// φ(D) − φ(D°) with one point per open gap, in gap order.
pub fn abel_map(curve: &FiniteGenusCurve, basis: &DualFormBasis, d: &[CurvePoint], origin: &[CurvePoint]) -> Result<AbelResult> {
    let g = curve.genus();
    if d.len() != g || origin.len() != g {
        return Err(SpectralError::InvalidInput("one divisor point per open gap required".into()));
    }
    let mut value = vec![C64::new(0.0, 0.0); g];
    for j in 0..g {
        let a = abel_integral(curve, basis, j, d[j]);
        let b = abel_integral(curve, basis, j, origin[j]);
        for n in 0..g {
            value[n] += a[n] - b[n];
        }
    }
    let reduced = PeriodLattice::new(basis).reduce(&value)?;
    Ok(AbelResult { value, reduced })
}

/// Per open gap: √W at an anchor beside the gap, W = (Δ²/4 − 1)/y². The
/// branch is transported from a point high in the annulus, where the true
/// sheet is identified with μ ≈ e^{iζ} (ζ built from the curve's own √λ).
#[derive(Debug, Clone, Serialize)]
pub struct SheetReference {
    pub anchors: Vec<C64>,
    pub sqrt_w: Vec<C64>,
}

fn nearest_root(s: C64, z: C64) -> C64 {
    // roots of s² − 4ζ s + 1 = 0
    let d = (4.0 * z * z - 1.0).sqrt();
    let (r1, r2) = (2.0 * z + d, 2.0 * z - d);
    if (r1 - s).norm() <= (r2 - s).norm() {
        r1
    } else {
        r2
    }
}

const SHEET_STEPS: usize = 96;

pub fn sheet_reference(solver: &MonodromySolver, curve: &FiniteGenusCurve) -> Result<SheetReference> {
    let mut anchors = Vec::new();
    let mut sqrt_w = Vec::new();
    for gap in &curve.gaps {
        let t = gap.mid() + C64::new(0.0, 0.6) * gap.half();
        let s_t = curve.sqrt_lambda(t);
        let z_t = (s_t + s_t.inv()) * 0.25;
        // climb in Im ζ on the side that moves away from the cut
        let side = |sg: f64| {
            let s = nearest_root(s_t, z_t + C64::new(0.0, 0.01 * sg));
            ((s * s - t) / gap.half()).im
        };
        let sg = if side(1.0) > side(-1.0) { 1.0 } else { -1.0 };
        let mut path = Vec::with_capacity(SHEET_STEPS + 1);
        let mut s = s_t;
        for i in 0..=SHEET_STEPS {
            let z = z_t + C64::new(0.0, 2.0 * sg * i as f64 / SHEET_STEPS as f64);
            s = nearest_root(s, z);
            path.push((z, s, s * s));
        }
        let lams: Vec<C64> = path.iter().map(|p| p.2).collect();
        let ms = solver.batch(&lams)?;
        // continue y along the path from its reference value at t
        let mut ys = Vec::with_capacity(path.len());
        let mut y = curve.y(t);
        for &(_, _, l) in &path {
            let mut c = curve.y2(l).sqrt();
            if (c + y).norm() < (c - y).norm() {
                c = -c;
            }
            y = c;
            ys.push(y);
        }
        let last = path.len() - 1;
        let (zq, _, _) = path[last];
        let dq = ms[last].trace();
        let mut nu = (dq * dq * 0.25 - 1.0).sqrt();
        let vac = C64::new(0.0, 1.0) * zq.sin();
        if (nu + vac).norm() < (nu - vac).norm() {
            nu = -nu;
        }
        let mut w = nu / ys[last];
        for i in (0..last).rev() {
            let d = ms[i].trace();
            let mut c = ((d * d * 0.25 - 1.0) / (ys[i] * ys[i])).sqrt();
            if (c + w).norm() < (c - w).norm() {
                c = -c;
            }
            w = c;
        }
        anchors.push(t);
        sqrt_w.push(w);
    }
    Ok(SheetReference { anchors, sqrt_w })
}

/// Lift (λ, μ) in gap j to the model: y = ±y(λ) with the sign matching
/// μ − Δ/2 = (μ − 1/μ)/2 against √W·y. Returns the point and whether the
/// two candidates were too close to call.
pub fn lift_entry(curve: &FiniteGenusCurve, sheets: &SheetReference, j: usize, lambda: C64, mu: C64) -> (CurvePoint, bool) {
    let nu = (mu - mu.inv()) * 0.5;
    let y0 = curve.y2(lambda).sqrt();
    let w = sheets.sqrt_w[j];
    let dp = (nu - w * y0).norm();
    let dm = (nu + w * y0).norm();
    let y = if dp <= dm { y0 } else { -y0 };
    let scale = (w * curve.y(sheets.anchors[j])).norm();
    let ambiguous = dp.min(dm) > 0.5 * dp.max(dm) && (w * y0).norm() > 1e-6 * scale;
    (CurvePoint { lambda, y }, ambiguous)
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub spectral: SpectralOptions,
    pub quad_nodes: usize,
    /// Maximal bisection depth between samples for the continuity tracker.
    pub max_subdivisions: usize,
    /// Integrator steps per unit of y.
    pub y_steps_per_unit: usize,
    pub y_filter_cutoff: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            spectral: SpectralOptions {
                verify_counts: false,
                ..SpectralOptions::default()
            },
            quad_nodes: DEFAULT_NODES,
            max_subdivisions: 6,
            y_steps_per_unit: 400,
            y_filter_cutoff: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowReport {
    pub kind: &'static str,
    pub genus: usize,
    pub gaps: Vec<i64>,
    pub params: Vec<f64>,
    /// φ_n at each sample (continuous lift, φ = 0 at the first sample).
    pub phi: Vec<Vec<C64>>,
    pub slopes: Vec<C64>,
    pub intercepts: Vec<C64>,
    /// Max fit residual of each coordinate.
    pub residuals: Vec<f64>,
    /// Spread max − min of each coordinate.
    pub ranges: Vec<f64>,
    /// residual / range (0 for a static coordinate, range below STATIC_RANGE).
    pub rel_residuals: Vec<f64>,
    /// Lattice decomposition of φ(last) − φ(first) (x-flow over a period).
    pub lattice: Option<LatticeReduction>,
    /// Lattice jumps removed between consecutive samples, per coordinate.
    pub windings: Vec<Vec<i64>>,
    pub ambiguous_lifts: usize,
    pub b_periods: Vec<Vec<C64>>,
}

/// Coordinates moving less than this over the samples count as static.
pub const STATIC_RANGE: f64 = 1e-10;

fn linear_fit(t: &[f64], v: &[C64]) -> (C64, C64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<C64>() / n;
    let stt: f64 = t.iter().map(|x| (x - mt) * (x - mt)).sum();
    let stv: C64 = t.iter().zip(v).map(|(x, y)| (y - mv) * (x - mt)).sum();
    let slope = if stt > 0.0 { stv / stt } else { C64::new(0.0, 0.0) };
    let icpt = mv - slope * mt;
    let res = t.iter().zip(v).map(|(x, y)| (y - icpt - slope * x).norm()).fold(0.0, f64::max);
    (slope, icpt, res)
}

struct Tracker<'a> {
    curve: &'a FiniteGenusCurve,
    basis: &'a DualFormBasis,
    lattice: PeriodLattice,
    sheets: SheetReference,
    opts: FlowOptions,
}

impl Tracker<'_> {
    /// Open-gap divisor entries of `p`, seeded at `seeds`.
    fn entries(&self, p: &PeriodicPotential, seeds: &[C64]) -> Result<Vec<DivisorEntry>> {
        let solver = MonodromySolver::new(p);
        self.curve
            .gaps
            .iter()
            .zip(seeds)
            .map(|(g, &s)| divisor_entry(&solver, g.n, s, &self.opts.spectral))
            .collect()
    }

    fn abel(&self, pts: &[CurvePoint]) -> Vec<C64> {
        let g = self.curve.genus();
        let mut v = vec![C64::new(0.0, 0.0); g];
        for (j, &p) in pts.iter().enumerate() {
            for (a, b) in v.iter_mut().zip(abel_integral(self.curve, self.basis, j, p)) {
                *a += b;
            }
        }
        v
    }

    /// Walk the samples; between samples bisect until every tracked point
    /// moves less than a quarter of its gap.
    fn run<F>(&self, params: &[f64], potential: F, kind: &'static str) -> Result<FlowReport>
    where
        F: Fn(f64) -> Result<PeriodicPotential> + Sync,
    {
        let g = self.curve.genus();
        let scale: Vec<f64> = self.curve.gaps.iter().map(|gp| (gp.e2 - gp.e1).norm()).collect();
        let mids: Vec<C64> = self.curve.gaps.iter().map(|gp| gp.mid()).collect();
        // cold-seeded entries at every sample, computed in parallel; the
        // ordered pass below re-solves warm wherever continuity is in doubt
        let cold: Vec<Option<Vec<DivisorEntry>>> =
            par::map(params, |&t| potential(t).and_then(|q| self.entries(&q, &mids)).ok());
        let first = match &cold[0] {
            Some(es) => es.clone(),
            None => self.entries(&potential(params[0])?, &mids)?,
        };
        let mut seeds: Vec<C64> = first.iter().map(|e| e.lambda).collect();
        let mut ambiguous = 0usize;
        let lift = |es: &[DivisorEntry], amb: &mut usize| -> Vec<CurvePoint> {
            es.iter()
                .enumerate()
                .map(|(j, e)| {
                    let (p, a) = lift_entry(self.curve, &self.sheets, j, e.lambda, e.mu);
                    *amb += usize::from(a);
                    p
                })
                .collect()
        };
        let mut f_prev = self.abel(&lift(&first, &mut ambiguous));
        let mut phi = vec![vec![C64::new(0.0, 0.0); g]];
        let mut acc = vec![C64::new(0.0, 0.0); g];
        let mut windings = vec![vec![0i64; 2 * g]; 1];
        for (i, w) in params.windows(2).enumerate() {
            let mut stack = vec![(w[0], w[1], 0usize)];
            let mut wind = vec![0i64; 2 * g];
            // process sub-intervals left to right
            while let Some((a, b, depth)) = stack.pop() {
                let near = |es: &[DivisorEntry], seeds: &[C64]| {
                    es.iter().zip(seeds).zip(&scale).all(|((e, s), sc)| (e.lambda - s).norm() <= 0.25 * sc)
                };
                let es = match &cold[i + 1] {
                    Some(es) if b == w[1] && near(es, &seeds) => es.clone(),
                    _ => self.entries(&potential(b)?, &seeds)?,
                };
                let far = es
                    .iter()
                    .zip(&seeds)
                    .zip(&scale)
                    .any(|((e, s), sc)| (e.lambda - s).norm() > 0.25 * sc);
                if far {
                    if depth >= self.opts.max_subdivisions {
                        let k = es
                            .iter()
                            .zip(&seeds)
                            .zip(&scale)
                            .find(|((e, s), sc)| (e.lambda - **s).norm() > 0.25 * **sc)
                            .map_or(0, |((e, _), _)| e.k);
                        return Err(SpectralError::TrackingLost { k, t: b });
                    }
                    let c = 0.5 * (a + b);
                    stack.push((c, b, depth + 1));
                    stack.push((a, c, depth + 1));
                    continue;
                }
                let f = self.abel(&lift(&es, &mut ambiguous));
                let inc: Vec<C64> = f.iter().zip(&f_prev).map(|(x, y)| x - y).collect();
                let red = self.lattice.reduce(&inc)?;
                for r in 0..g {
                    wind[r] += red.m[r];
                    wind[g + r] += red.n[r];
                }
                for (a, r) in acc.iter_mut().zip(&red.residual) {
                    *a += r;
                }
                f_prev = f;
                seeds = es.iter().map(|e| e.lambda).collect();
            }
            phi.push(acc.clone());
            windings.push(wind);
        }
        let mut slopes = Vec::new();
        let mut intercepts = Vec::new();
        let mut residuals = Vec::new();
        let mut ranges = Vec::new();
        let mut rel = Vec::new();
        for n in 0..g {
            let col: Vec<C64> = phi.iter().map(|v| v[n]).collect();
            let (s, c, r) = linear_fit(params, &col);
            let mut range = 0.0f64;
            for a in &col {
                for b in &col {
                    range = range.max((a - b).norm());
                }
            }
            slopes.push(s);
            intercepts.push(c);
            residuals.push(r);
            ranges.push(range);
            rel.push(if range > STATIC_RANGE { r / range } else { 0.0 });
        }
        Ok(FlowReport {
            kind,
            genus: g,
            gaps: self.curve.gaps.iter().map(|gp| gp.n).collect(),
            params: params.to_vec(),
            phi,
            slopes,
            intercepts,
            residuals,
            ranges,
            rel_residuals: rel,
            lattice: None,
            windings,
            ambiguous_lifts: ambiguous,
            b_periods: self.basis.b_periods.clone(),
        })
    }
}

fn static_report(kind: &'static str, params: &[f64]) -> FlowReport {
    FlowReport {
        kind,
        genus: 0,
        gaps: Vec::new(),
        params: params.to_vec(),
        phi: vec![Vec::new(); params.len()],
        slopes: Vec::new(),
        intercepts: Vec::new(),
        residuals: Vec::new(),
        ranges: Vec::new(),
        rel_residuals: Vec::new(),
        lattice: None,
        windings: Vec::new(),
        ambiguous_lifts: 0,
        b_periods: Vec::new(),
    }
}

/// Curve of the `n_gaps` largest open gaps of p within |k| ≤ K.
pub fn curve_of(p: &PeriodicPotential, n_gaps: usize, k_max: usize, opts: &FlowOptions) -> Result<(FiniteGenusCurve, MonodromySolver)> {
    let solver = MonodromySolver::new(p);
    let b = find_branch_points_with(&solver, k_max, &opts.spectral)?;
    let open = largest_gaps(&b, n_gaps);
    Ok((make_curve(&b, &open)?, solver))
}

fn flow_check<F>(p: &PeriodicPotential, n_gaps: usize, params: &[f64], k_max: usize, opts: &FlowOptions, kind: &'static str, potential: F) -> Result<FlowReport>
where
    F: Fn(f64) -> Result<PeriodicPotential> + Sync,
{
    if params.len() < 2 {
        return Err(SpectralError::InvalidInput("at least two samples required".into()));
    }
    let (curve, solver) = curve_of(p, n_gaps, k_max, opts)?;
    if curve.genus() == 0 {
        return Ok(static_report(kind, params));
    }
    let basis = dual_forms(&curve, opts.quad_nodes)?;
    let sheets = sheet_reference(&solver, &curve)?;
    let tracker = Tracker {
        curve: &curve,
        lattice: PeriodLattice::new(&basis),
        basis: &basis,
        sheets,
        opts: *opts,
    };
    tracker.run(params, potential, kind)
}

/// x-translation flow over the samples; when they span a full period the
/// total displacement is tested for membership in Γ.
pub fn flow_x_check(p: &PeriodicPotential, n_gaps: usize, x_samples: &[f64], k_max: usize) -> Result<FlowReport> {
    flow_x_check_with(p, n_gaps, x_samples, k_max, &FlowOptions::default())
}

pub fn flow_x_check_with(p: &PeriodicPotential, n_gaps: usize, x_samples: &[f64], k_max: usize, opts: &FlowOptions) -> Result<FlowReport> {
    let mut rep = flow_check(p, n_gaps, x_samples, k_max, opts, "x", |x| Ok(translate_x(p, x)))?;
    let span = x_samples[x_samples.len() - 1] - x_samples[0];
    if rep.genus > 0 && (span - span.round()).abs() < 1e-12 && span.round() != 0.0 {
        let last = rep.phi.last().expect("samples").clone();
        let (curve, _) = curve_of(p, n_gaps, k_max, opts)?;
        let basis = dual_forms(&curve, opts.quad_nodes)?;
        rep.lattice = Some(PeriodLattice::new(&basis).reduce(&last)?);
    }
    Ok(rep)
}

/// y-evolution flow; samples should stay within the validity range of the
/// Cauchy evolution.
pub fn flow_y_check(p: &PeriodicPotential, n_gaps: usize, y_samples: &[f64], k_max: usize) -> Result<FlowReport> {
    flow_y_check_with(p, n_gaps, y_samples, k_max, &FlowOptions::default())
}

pub fn flow_y_check_with(p: &PeriodicPotential, n_gaps: usize, y_samples: &[f64], k_max: usize, opts: &FlowOptions) -> Result<FlowReport> {
    let steps = opts.y_steps_per_unit;
    let cutoff = opts.y_filter_cutoff;
    flow_check(p, n_gaps, y_samples, k_max, opts, "y", |y| {
        let n = ((y.abs() * steps as f64).ceil() as usize).max(1);
        evolve_y(p, y, n, cutoff)
    })
}

/// Uniform samples on [a, b] inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn genus_zero_is_sqrt() {
        let c = FiniteGenusCurve::new(Vec::new()).unwrap();
        assert_eq!(c.genus(), 0);
        let z = C64::new(2.0, 1.0);
        assert!((c.y(z) - z.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn a_period_matches_contour_oracle() {
        let c = synthetic(&[(1, 150.0, 8.0)]);
        let p = a_periods(&c, 64);
        let q = a_periods_contour(&c, 400);
        assert!((p[0][0] - q[0][0]).norm() < 1e-9 * q[0][0].norm(), "{} {}", p[0][0], q[0][0]);
        let p2 = a_periods(&c, 128);
        assert!((p2[0][0] - p[0][0]).norm() < 1e-10 * p[0][0].norm());
    }

    #[test]
    fn cycles_are_canonical_and_riemann_symmetric() {
        let c = synthetic(&[(-1, 0.0064, 3e-4), (1, 156.0, 7.8), (3, 1419.0, 0.5)]);
        let cs = cycle_system(&c);
        assert!(cs.is_canonical(), "{:?} {:?} {:?} {:?}", cs.ab, cs.aa, cs.bb, cs.a_winding);
        let b = dual_forms(&c, 64).unwrap();
        for k in 0..3 {
            let a: Vec<C64> = b.apply(&b.a_periods[k]);
            for n in 0..3 {
                let want = if n == k { 1.0 } else { 0.0 };
                assert!((a[n] - want).norm() < 1e-8, "k={k} n={n} {}", a[n]);
            }
        }
        assert!(b.symmetry_defect() < 1e-8, "{:?}", b.b_periods);
        // Im β positive definite (diagonal check suffices for the sign)
        for n in 0..3 {
            assert!(b.b_periods[n][n].im > 0.0);
        }
    }

    #[test]
    fn ray_avoids_gap_on_negative_axis() {
        let c = FiniteGenusCurve::new(vec![Gap {
            n: 0,
            e1: C64::new(-0.8, 0.0),
            e2: C64::new(-1.25, 0.0),
        }])
        .unwrap();
        assert!(c.cut_angle != PI);
        assert!(cycle_system(&c).is_canonical());
        let pts: Vec<C64> = (0..100).map(|i| C64::from_polar(0.3 + i as f64 * 0.05, 0.7 * i as f64)).collect();
        assert!(c.branch_residual(&pts) < 1e-12);
    }

    #[test]
    fn endpoint_paths_differ_by_lattice() {
        let c = synthetic(&[(1, 150.0, 8.0), (2, 630.0, 3.0)]);
        let b = dual_forms(&c, 64).unwrap();
        let l = C64::new(151.0, 2.0);
        let p = CurvePoint { lambda: l, y: c.y(l) };
        let g = c.gaps[0];
        let v1 = b.apply(&segment_from_branch(&c, g.e1, p, 64));
        let mut v2 = b.apply(&segment_from_branch(&c, g.e2, p, 64));
        v2[0] += 0.5;
        let d: Vec<C64> = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
        let r = PeriodLattice::new(&b).reduce(&d).unwrap();
        assert!(r.distance < 1e-8, "{:?}", r);
    }
}
