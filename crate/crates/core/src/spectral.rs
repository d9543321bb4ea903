//! Spectral data per annulus: zero counts, divisor, branch points, the Div
//! metric and the two symplectic forms.
//!
//! The annuli S_k are described in the ζ-plane, ζ = (λ^{1/2} + λ^{−1/2})/4:
//! S_k (k > 0) is (k−½)π ≤ |ζ| ≤ (k+½)π on the sheet |λ| > 1, S_{−k} the same
//! band on |λ| < 1 and S_0 the disc |ζ| ≤ π/2. Boundaries are therefore the
//! preimages of half circles |ζ| = (n+½)π, Re ζ ≥ 0, which we call ζ-loops.

use crate::cauchy::TaylorDisc;
use crate::error::{Result, SpectralError};
use crate::linalg::Mat2;
use crate::monodromy::{lambda_k0, mu_k0, node_spacing, zeta, MonodromySolver};
use crate::par;
use crate::potential::PeriodicPotential;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Index k of the annulus S_k containing λ; ties go to the smaller |k|.
pub fn annulus_index(lambda: C64) -> i64 {
    let z = zeta(lambda).norm();
    if z <= PI / 2.0 {
        return 0;
    }
    let n = (z / PI - 0.5).ceil() as i64;
    if lambda.norm() > 1.0 {
        n
    } else {
        -n
    }
}

/// λ on the ζ-loop of radius `r` at angle θ ∈ [−π/2, π/2], on the outer
/// (|λ| > 1) or inner sheet.
pub fn zeta_loop_point(r: f64, theta: f64, outer: bool) -> C64 {
    let z = C64::from_polar(r, theta);
    let w = 2.0 * z;
    let d = (w * w - 1.0).sqrt();
    let (s1, s2) = (w + d, w - d);
    let big = if s1.norm() >= s2.norm() { s1 } else { s2 };
    let l = big * big;
    if outer {
        l
    } else {
        l.inv()
    }
}

/// Closed positively oriented contours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contour {
    Circle { center: C64, radius: f64 },
    /// Preimage of |ζ| = radius on one sheet; encircles λ = 0 once.
    ZetaLoop { radius: f64, outer: bool },
    /// ∂S_k, as outer minus inner ζ-loop.
    AnnulusBoundary { k: i64 },
}

impl Contour {
    /// n samples, counterclockwise; the 2n-point set contains the n-point
    /// set at even indices.
    pub fn points(&self, n: usize) -> Vec<C64> {
        match *self {
            Contour::Circle { center, radius } => crate::cauchy::circle_points(center, radius, n),
            Contour::ZetaLoop { radius, outer } => {
                let pt = |j: usize| zeta_loop_point(radius, -PI / 2.0 + PI * j as f64 / n as f64, true);
                if outer {
                    (0..n).map(pt).collect()
                } else {
                    // inversion reverses orientation; walk the outer loop backwards
                    (0..n).map(|j| pt((n - j) % n).inv()).collect()
                }
            }
            Contour::AnnulusBoundary { .. } => Vec::new(),
        }
    }

    /// The two ζ-loops (outer, inner) whose winding difference counts zeros in S_k.
    pub fn annulus_loops(k: i64) -> (Contour, Contour) {
        let a = k.unsigned_abs() as f64;
        if k == 0 {
            (
                Contour::ZetaLoop { radius: PI / 2.0, outer: true },
                Contour::ZetaLoop { radius: PI / 2.0, outer: false },
            )
        } else if k > 0 {
            (
                Contour::ZetaLoop { radius: (a + 0.5) * PI, outer: true },
                Contour::ZetaLoop { radius: (a - 0.5) * PI, outer: true },
            )
        } else {
            (
                Contour::ZetaLoop { radius: (a - 0.5) * PI, outer: false },
                Contour::ZetaLoop { radius: (a + 0.5) * PI, outer: false },
            )
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CountOptions {
    /// Initial samples per contour (raised to 16·|k| on annulus loops).
    pub min_points: usize,
    /// Number of doublings allowed while the winding is unstable.
    pub max_doublings: usize,
    /// |f| below `zero_threshold · scale` on a sample is a zero on the contour.
    pub zero_threshold: f64,
    /// Largest accepted phase increment between neighbouring samples.
    pub max_phase_step: f64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            min_points: 64,
            max_doublings: 5,
            zero_threshold: 1e-10,
            max_phase_step: PI / 3.0,
        }
    }
}

fn winding(vals: &[(C64, f64)], thr: f64) -> Result<(f64, f64)> {
    let n = vals.len();
    let mut total = 0.0;
    let mut max_step = 0.0f64;
    for j in 0..n {
        let (v, s) = vals[j];
        if !(v.norm() > thr * s) {
            return Err(SpectralError::ZeroOnContour {
                min_abs: v.norm(),
                threshold: thr * s,
            });
        }
        let d = (vals[(j + 1) % n].0 / v).arg();
        max_step = max_step.max(d.abs());
        total += d;
    }
    Ok((total / (2.0 * PI), max_step))
}

/// Winding numbers of several functionals along one contour, refined by
/// doubling until every integer repeats and all phase steps are small.
/// `eval` returns, per point, (value, noise scale) for each functional.
fn stable_windings<E>(contour: &Contour, n0: usize, nf: usize, eval: &E, opts: &CountOptions) -> Result<Vec<i64>>
where
    E: Fn(&[C64]) -> Result<Vec<Vec<(C64, f64)>>>,
{
    let mut n = n0;
    let mut vals = eval(&contour.points(n))?;
    let mut prev: Option<Vec<i64>> = None;
    for _ in 0..=opts.max_doublings {
        let mut cur = Vec::with_capacity(nf);
        let mut smooth = true;
        for f in 0..nf {
            let col: Vec<(C64, f64)> = vals.iter().map(|v| v[f]).collect();
            let (w, step) = winding(&col, opts.zero_threshold)?;
            smooth &= step < opts.max_phase_step && (w - w.round()).abs() < 0.05;
            cur.push(w.round() as i64);
        }
        if smooth && prev.as_ref() == Some(&cur) {
            return Ok(cur);
        }
        prev = Some(cur);
        // double: evaluate only the new odd-index points
        let fine = contour.points(2 * n);
        let odd: Vec<C64> = fine.iter().skip(1).step_by(2).copied().collect();
        let new = eval(&odd)?;
        let mut merged = Vec::with_capacity(2 * n);
        for (a, b) in vals.into_iter().zip(new) {
            merged.push(a);
            merged.push(b);
        }
        vals = merged;
        n *= 2;
    }
    Err(SpectralError::WindingUnstable {
        refinements: opts.max_doublings,
    })
}

/// Argument-principle count of zeros of `f` inside `contour`
/// (for [`Contour::AnnulusBoundary`]: zeros in S_k).
pub fn count_zeros<F>(f: &F, contour: &Contour, opts: &CountOptions) -> Result<i64>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let eval = |pts: &[C64]| -> Result<Vec<Vec<(C64, f64)>>> {
        par::map(pts, |&z| f(z).map(|v| vec![(v, 1.0)])).into_iter().collect()
    };
    match *contour {
        Contour::AnnulusBoundary { k } => {
            let n0 = opts.min_points.max(16 * (k.unsigned_abs() as usize + 1));
            let (o, i) = Contour::annulus_loops(k);
            let wo = stable_windings(&o, n0, 1, &eval, opts)?[0];
            let wi = stable_windings(&i, n0, 1, &eval, opts)?[0];
            Ok(wo - wi)
        }
        _ => Ok(stable_windings(contour, opts.min_points, 1, &eval, opts)?[0]),
    }
}

/// Per-annulus counts of zeros of c and of Δ² − 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnulusCount {
    pub k: i64,
    pub c_zeros: i64,
    pub disc_zeros: i64,
}

fn monodromy_functionals(solver: &MonodromySolver, pts: &[C64]) -> Result<Vec<Vec<(C64, f64)>>> {
    let ms = solver.batch(pts)?;
    Ok(pts
        .iter()
        .zip(ms)
        .map(|(l, m)| {
            // noise scales: entries are integrated with a norm-wise relative
            // tolerance in a gauge where c carries an extra factor |λ|^{1/2}
            let s = l.norm().sqrt().max(1.0);
            let nm = m.norm_max().max(1.0);
            vec![(m.c, nm * s), (m.disc(), nm * nm)]
        })
        .collect())
}

/// Counts for every annulus |k| ≤ `kmax`.
pub fn annulus_counts(solver: &MonodromySolver, kmax: usize, opts: &CountOptions) -> Result<Vec<AnnulusCount>> {
    let eval = |pts: &[C64]| monodromy_functionals(solver, pts);
    let n_for = |n: usize| opts.min_points.max(16 * (n + 1));
    // ζ-loops of radius (n+½)π on both sheets, n = 0..kmax
    let mut outer = Vec::with_capacity(kmax + 1);
    let mut inner = Vec::with_capacity(kmax + 1);
    for n in 0..=kmax {
        let r = (n as f64 + 0.5) * PI;
        outer.push(stable_windings(&Contour::ZetaLoop { radius: r, outer: true }, n_for(n), 2, &eval, opts)?);
        inner.push(stable_windings(&Contour::ZetaLoop { radius: r, outer: false }, n_for(n), 2, &eval, opts)?);
    }
    let mut out = Vec::with_capacity(2 * kmax + 1);
    for k in -(kmax as i64)..=kmax as i64 {
        let a = k.unsigned_abs() as usize;
        let (hi, lo) = match k.signum() {
            0 => (&outer[0], &inner[0]),
            1 => (&outer[a], &outer[a - 1]),
            _ => (&inner[a - 1], &inner[a]),
        };
        out.push(AnnulusCount {
            k,
            c_zeros: hi[0] - lo[0],
            disc_zeros: hi[1] - lo[1],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Samples per Cauchy circle.
    pub taylor_points: usize,
    /// Circle radius as a fraction of the vacuum node spacing.
    pub radius_frac: f64,
    /// Relative Newton step tolerance.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Verify per-annulus counts by the argument principle.
    pub verify_counts: bool,
    /// Entries with |k| > k_align must lie in their own annulus.
    pub k_align: usize,
    /// Double point when |κ₁ − κ₂| < double_point_tol·(1 + |λ_{k,0}|).
    pub double_point_tol: f64,
    pub count: CountOptions,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            taylor_points: 16,
            radius_frac: 0.1,
            newton_tol: 1e-14,
            max_newton: 40,
            verify_counts: true,
            k_align: 0,
            double_point_tol: 1e-9,
            count: CountOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisorEntry {
    pub k: i64,
    pub lambda: C64,
    pub mu: C64,
    pub mult: u32,
}

/// Truncated spectral divisor, one entry per |k| ≤ K sorted by k; entries
/// beyond K are the vacuum values (λ_{k,0}, (−1)^k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDivisor")]
pub struct SpectralDivisor {
    #[serde(rename = "K")]
    pub k_max: usize,
    pub entries: Vec<DivisorEntry>,
}

#[derive(Deserialize)]
struct RawDivisor {
    #[serde(rename = "K")]
    k_max: usize,
    entries: Vec<DivisorEntry>,
}

impl TryFrom<RawDivisor> for SpectralDivisor {
    type Error = SpectralError;

    fn try_from(r: RawDivisor) -> Result<Self> {
        SpectralDivisor::new(r.k_max, r.entries)
    }
}

impl SpectralDivisor {
    pub fn new(k_max: usize, mut entries: Vec<DivisorEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.k);
        let ks: Vec<i64> = entries.iter().map(|e| e.k).collect();
        let want: Vec<i64> = (-(k_max as i64)..=k_max as i64).collect();
        if ks != want {
            return Err(SpectralError::InvalidInput(format!(
                "divisor entries must cover k = -{k_max}..={k_max} exactly once"
            )));
        }
        if entries.iter().any(|e| e.lambda.norm() == 0.0 || e.mu.norm() == 0.0 || !e.lambda.is_finite() || !e.mu.is_finite()) {
            return Err(SpectralError::InvalidInput("divisor entries need finite nonzero λ and μ".into()));
        }
        Ok(SpectralDivisor { k_max, entries })
    }

    pub fn vacuum(k_max: usize) -> Self {
        let entries = (-(k_max as i64)..=k_max as i64)
            .map(|k| DivisorEntry {
                k,
                lambda: C64::new(lambda_k0(k), 0.0),
                mu: C64::new(mu_k0(k), 0.0),
                mult: 1,
            })
            .collect();
        SpectralDivisor { k_max, entries }
    }

    pub fn get(&self, k: i64) -> Option<&DivisorEntry> {
        if k.unsigned_abs() as usize > self.k_max {
            return None;
        }
        self.entries.get((k + self.k_max as i64) as usize)
    }

    /// λ_k, using the vacuum tail beyond K.
    pub fn lambda_at(&self, k: i64) -> C64 {
        self.get(k).map_or(C64::new(lambda_k0(k), 0.0), |e| e.lambda)
    }

    /// μ_k, using the vacuum tail beyond K.
    pub fn mu_at(&self, k: i64) -> C64 {
        self.get(k).map_or(C64::new(mu_k0(k), 0.0), |e| e.mu)
    }

    pub fn lambdas(&self) -> Vec<C64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    /// max_k |μ_k² − Δ(λ_k)μ_k + 1| for a given discriminant.
    pub fn curve_residual<F: Fn(C64) -> C64>(&self, delta: F) -> f64 {
        self.entries
            .iter()
            .map(|e| (e.mu * e.mu - delta(e.lambda) * e.mu + 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// Same divisor cut or padded (with vacuum entries) to radius `k_max`.
    pub fn truncated(&self, k_max: usize) -> Self {
        let entries = (-(k_max as i64)..=k_max as i64)
            .map(|k| match self.get(k) {
                Some(e) => *e,
                None => DivisorEntry {
                    k,
                    lambda: C64::new(lambda_k0(k), 0.0),
                    mu: C64::new(mu_k0(k), 0.0),
                    mult: 1,
                },
            })
            .collect();
        SpectralDivisor { k_max, entries }
    }
}

/// Zero of `f` near `seed`: Taylor disc on a circle of radius `r` gives a
/// polynomial root and the derivative; direct Newton steps finish the job.
/// Returns the root and a disc centred at it.
pub(crate) fn newton_cauchy<F>(f: &F, seed: C64, r: f64, opts: &SpectralOptions) -> Result<(C64, TaylorDisc)>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let m = opts.taylor_points;
    let mut z = seed;
    let mut disc = TaylorDisc::fit(f, z, r, m)?;
    let mut iters = 0;
    let mut last_step = f64::INFINITY;
    let mut lam = match disc.root_near(z) {
        Some(w) if (w - z).norm() < 0.9 * r => w,
        Some(w) => z + (w - z) * (0.9 * r / (w - z).norm()),
        None => z,
    };
    while iters < opts.max_newton {
        iters += 1;
        if (lam - z).norm() > 0.5 * r {
            z = lam;
            disc = TaylorDisc::fit(f, z, r, m)?;
            if let Some(w) = disc.root_near(z) {
                if (w - z).norm() < 0.9 * r {
                    lam = w;
                }
            }
            continue;
        }
        let v = f(lam)?;
        let d = disc.eval_derivative(lam);
        if d.norm() == 0.0 || !d.is_finite() {
            break;
        }
        let step = v / d;
        let sn = step.norm();
        lam -= step;
        if sn <= opts.newton_tol * lam.norm() || v.norm() == 0.0 || (sn >= 0.5 * last_step && sn < 1e-7 * r) {
            let fin = TaylorDisc::fit(f, lam, r, m)?;
            return Ok((lam, fin));
        }
        last_step = sn;
    }
    Err(SpectralError::NotConverged {
        iterations: iters,
        defect: last_step,
    })
}

pub fn divisor_entry(solver: &MonodromySolver, k: i64, seed: C64, opts: &SpectralOptions) -> Result<DivisorEntry> {
    let c = |l: C64| solver.monodromy(l).map(|m| m.c);
    let r = opts.radius_frac * node_spacing(k);
    let check = |lam: C64| k.unsigned_abs() as usize <= opts.k_align || annulus_index(lam) == k;
    let attempt = newton_cauchy(&c, seed, r, opts);
    let (lam, disc) = match attempt {
        Ok((l, d)) if check(l) => (l, d),
        other => {
            // fall back to a grid of seeds across S_k
            let mut found = None;
            let a = k.unsigned_abs() as f64;
            'outer: for rad in [-0.3, 0.0, 0.3] {
                for th in [-0.6, -0.3, 0.0, 0.3, 0.6] {
                    if k == 0 && rad < 0.0 {
                        continue;
                    }
                    let s = zeta_loop_point(((a + rad) * PI).max(0.3), th, k >= 0);
                    if let Ok((l, d)) = newton_cauchy(&c, s, opts.radius_frac * node_spacing(k), opts) {
                        if check(l) {
                            found = Some((l, d));
                            break 'outer;
                        }
                    }
                }
            }
            match found {
                Some(x) => x,
                None => {
                    return Err(SpectralError::RootNotFound {
                        k,
                        reason: match other {
                            Ok((l, _)) => format!("Newton left S_{k} (landed at {l})"),
                            Err(e) => e.to_string(),
                        },
                    })
                }
            }
        }
    };
    let mult = disc.vanishing_order(1e-6).max(1) as u32;
    let mu = solver.monodromy(lam)?.a;
    Ok(DivisorEntry { k, lambda: lam, mu, mult })
}

fn verify_counts(solver: &MonodromySolver, k_max: usize, opts: &SpectralOptions, disc: bool) -> Result<()> {
    let counts = annulus_counts(solver, k_max, &opts.count)?;
    for ac in counts {
        if ac.k.unsigned_abs() as usize <= opts.k_align {
            continue;
        }
        let (want, got) = if disc { (2, ac.disc_zeros) } else { (1, ac.c_zeros) };
        if got != want {
            return Err(SpectralError::CountMismatch {
                k: ac.k,
                expected: want,
                found: got,
            });
        }
    }
    Ok(())
}

/// Spectral divisor of `p` for |k| ≤ K with default options.
pub fn find_divisor(p: &PeriodicPotential, k_max: usize) -> Result<SpectralDivisor> {
    find_divisor_with(&MonodromySolver::new(p), k_max, &SpectralOptions::default())
}

pub fn find_divisor_with(solver: &MonodromySolver, k_max: usize, opts: &SpectralOptions) -> Result<SpectralDivisor> {
    let seeds: Vec<C64> = (-(k_max as i64)..=k_max as i64).map(|k| C64::new(lambda_k0(k), 0.0)).collect();
    find_divisor_seeded(solver, k_max, &seeds, opts)
}

/// As [`find_divisor_with`] with explicit Newton seeds (index k + K).
pub fn find_divisor_seeded(solver: &MonodromySolver, k_max: usize, seeds: &[C64], opts: &SpectralOptions) -> Result<SpectralDivisor> {
    if seeds.len() != 2 * k_max + 1 {
        return Err(SpectralError::InvalidInput("one seed per annulus required".into()));
    }
    if opts.verify_counts {
        verify_counts(solver, k_max, opts, false)?;
    }
    let ks: Vec<i64> = (-(k_max as i64)..=k_max as i64).collect();
    let res = par::map(&ks, |&k| divisor_entry(solver, k, seeds[(k + k_max as i64) as usize], opts));
    let entries = crate::monodromy::collect_batch(res)?;
    SpectralDivisor::new(k_max, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPair {
    pub k: i64,
    pub kappa1: C64,
    pub kappa2: C64,
    /// Coincident pair (zero of even order of Δ² − 4).
    pub double: bool,
}

impl BranchPair {
    pub fn midpoint(&self) -> C64 {
        (self.kappa1 + self.kappa2) * 0.5
    }

    pub fn gap(&self) -> f64 {
        (self.kappa1 - self.kappa2).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPointSet {
    #[serde(rename = "K")]
    pub k_max: usize,
    pub pairs: Vec<BranchPair>,
}

impl BranchPointSet {
    pub fn get(&self, k: i64) -> Option<&BranchPair> {
        if k.unsigned_abs() as usize > self.k_max {
            return None;
        }
        self.pairs.get((k + self.k_max as i64) as usize)
    }

    pub fn vacuum(k_max: usize) -> Self {
        let pairs = (-(k_max as i64)..=k_max as i64)
            .map(|k| {
                let l = C64::new(lambda_k0(k), 0.0);
                BranchPair { k, kappa1: l, kappa2: l, double: true }
            })
            .collect();
        BranchPointSet { k_max, pairs }
    }
}

fn branch_pair(solver: &MonodromySolver, k: i64, opts: &SpectralOptions) -> Result<BranchPair> {
    let g = |l: C64| solver.monodromy(l).map(|m| m.disc());
    let r = opts.radius_frac * node_spacing(k);
    let m = opts.taylor_points;
    // centre on the critical point of Δ² − 4, which is well conditioned even
    // when the two zeros nearly coincide
    let mut z = C64::new(lambda_k0(k), 0.0);
    let mut disc = TaylorDisc::fit(&g, z, r, m)?;
    for _ in 0..8 {
        let eta = disc
            .critical_point()
            .ok_or_else(|| SpectralError::RootNotFound { k, reason: "no critical point of Δ²−4 near λ_k0".into() })?;
        let moved = (eta - z).norm();
        z = eta;
        disc = TaylorDisc::fit(&g, z, r, m)?;
        if moved < 1e-12 * r {
            break;
        }
    }
    // value at the centre directly: near a double point M ≈ ±1 and the
    // discriminant is computed to squared integrator accuracy
    let g0 = solver.monodromy(z)?.disc();
    let g2 = disc.derivative(2) * 0.5;
    if g2.norm() == 0.0 {
        return Err(SpectralError::Degenerate(format!("flat discriminant at k = {k}")));
    }
    let half = (-g0 / g2).sqrt();
    let tol = opts.double_point_tol * (1.0 + lambda_k0(k).abs());
    if 2.0 * half.norm() < tol {
        return Ok(BranchPair { k, kappa1: z, kappa2: z, double: true });
    }
    let polish = |mut x: C64| -> Result<C64> {
        let mut last = f64::INFINITY;
        for _ in 0..opts.max_newton {
            let v = g(x)?;
            let d = disc.eval_derivative(x);
            let step = v / d;
            if !step.is_finite() {
                break;
            }
            x -= step;
            let sn = step.norm();
            if sn <= opts.newton_tol * x.norm() || (sn >= 0.5 * last && sn < 1e-7 * r) {
                break;
            }
            last = sn;
        }
        Ok(x)
    };
    let (mut k1, mut k2) = (polish(z - half)?, polish(z + half)?);
    if (k1.re, k1.im) > (k2.re, k2.im) {
        std::mem::swap(&mut k1, &mut k2);
    }
    let double = (k1 - k2).norm() < tol;
    Ok(BranchPair { k, kappa1: k1, kappa2: k2, double })
}

/// Branch points (zeros of Δ² − 4) for |k| ≤ K with default options.
pub fn find_branch_points(p: &PeriodicPotential, k_max: usize) -> Result<BranchPointSet> {
    find_branch_points_with(&MonodromySolver::new(p), k_max, &SpectralOptions::default())
}

pub fn find_branch_points_with(solver: &MonodromySolver, k_max: usize, opts: &SpectralOptions) -> Result<BranchPointSet> {
    if opts.verify_counts {
        verify_counts(solver, k_max, opts, true)?;
    }
    let ks: Vec<i64> = (-(k_max as i64)..=k_max as i64).collect();
    let res = par::map(&ks, |&k| branch_pair(solver, k, opts));
    let pairs = crate::monodromy::collect_batch(res)?;
    Ok(BranchPointSet { k_max, pairs })
}

/// σ(λ, μ) = (λ, 1/μ).
pub fn sigma_involution(point: (C64, C64)) -> Result<(C64, C64)> {
    if point.1.norm() == 0.0 {
        return Err(SpectralError::InvalidInput("μ = 0 is not on the curve".into()));
    }
    Ok((point.0, point.1.inv()))
}

fn same_point(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (a.norm() + b.norm())
}

/// Pairwise distinct λ_k, compared with relative tolerance `tol`.
pub fn is_tame(d: &SpectralDivisor, tol: f64) -> bool {
    tame_violation(d, tol).is_none()
}

/// First pair (k, k') with λ_k = λ_k' within `tol`.
pub fn tame_violation(d: &SpectralDivisor, tol: f64) -> Option<(i64, i64)> {
    let e = &d.entries;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            if same_point(e[i].lambda, e[j].lambda, tol) {
                return Some((e[i].k, e[j].k));
            }
        }
    }
    None
}

/// Equal λ's carry equal μ's.
pub fn is_nonspecial(d: &SpectralDivisor, tol: f64) -> bool {
    let e = &d.entries;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            if same_point(e[i].lambda, e[j].lambda, tol) && !same_point(e[i].mu, e[j].mu, tol) {
                return false;
            }
        }
    }
    true
}

/// Squared ℓ²_{−1,3} weight at index k.
fn weight_sq(k: i64) -> f64 {
    let a = k.unsigned_abs() as f64;
    match k.signum() {
        0 => 1.0,
        1 => 1.0 / (a * a),
        _ => a.powi(6),
    }
}

/// Div distance with the default matching window ±2.
pub fn divisor_distance(d1: &SpectralDivisor, d2: &SpectralDivisor) -> Result<f64> {
    divisor_distance_window(d1, d2, 2)
}

/// Minimum over assignments j = π(i) with |i − j| ≤ w of
/// Σ ½(w(i)+w(j))|λ_i − λ'_j|² + |μ_i − μ'_j|², square-rooted. Exact banded
/// assignment by dynamic programming over the window occupancy mask.
pub fn divisor_distance_window(d1: &SpectralDivisor, d2: &SpectralDivisor, w: usize) -> Result<f64> {
    if d1.k_max != d2.k_max {
        return Err(SpectralError::InvalidInput("divisors must share K".into()));
    }
    if w > 8 {
        return Err(SpectralError::InvalidInput("matching window too wide".into()));
    }
    let n = d1.entries.len();
    let kk = d1.k_max as i64;
    let cost = |i: usize, j: usize| {
        let (a, b) = (&d1.entries[i], &d2.entries[j]);
        0.5 * (weight_sq(i as i64 - kk) + weight_sq(j as i64 - kk)) * (a.lambda - b.lambda).norm_sqr()
            + (a.mu - b.mu).norm_sqr()
    };
    let width = 2 * w + 1;
    let states = 1usize << width;
    let inf = f64::INFINITY;
    // bit b of the mask ↔ column i − w + b already used
    let mut dp = vec![inf; states];
    let mut init = 0usize;
    for b in 0..w {
        init |= 1 << b; // columns < 0 do not exist
    }
    dp[init] = 0.0;
    for i in 0..n {
        let mut next = vec![inf; states];
        for (mask, &c0) in dp.iter().enumerate() {
            if c0 == inf {
                continue;
            }
            for b in 0..width {
                let j = i as i64 - w as i64 + b as i64;
                if j < 0 || j >= n as i64 || mask & (1 << b) != 0 {
                    continue;
                }
                let m2 = mask | (1 << b);
                // column i − w leaves the window and must be taken by now
                if m2 & 1 == 0 {
                    continue;
                }
                let nm = m2 >> 1;
                let v = c0 + cost(i, j as usize);
                if v < next[nm] {
                    next[nm] = v;
                }
            }
        }
        dp = next;
    }
    let best = dp.iter().copied().fold(inf, f64::min);
    if !best.is_finite() {
        return Err(SpectralError::Degenerate("no admissible assignment".into()));
    }
    Ok(best.sqrt())
}

/// Ω(v₁, v₂) = ∫₀¹ (δu·δ̃u_y − δ̃u·δu_y) dx by Parseval.
pub fn symplectic_omega(v1: &PeriodicPotential, v2: &PeriodicPotential) -> C64 {
    let jj = v1.band_limit().max(v2.band_limit());
    let (a, b) = (v1.padded(jj), v2.padded(jj));
    let j = jj as i64;
    (-j..=j)
        .map(|m| a.u_coeff(m) * b.uy_coeff(-m) - b.u_coeff(m) * a.uy_coeff(-m))
        .sum()
}

/// Tangent vector to the divisor: (k, δλ_k, δμ_k).
#[derive(Debug, Clone, PartialEq)]
pub struct DivisorTangent {
    pub entries: Vec<(i64, C64, C64)>,
}

/// Ω̃ = (i/2) Σ_k (δλ_k/λ_k · δ̃μ_k/μ_k − δ̃λ_k/λ_k · δμ_k/μ_k).
pub fn symplectic_omega_tilde(d: &SpectralDivisor, t1: &DivisorTangent, t2: &DivisorTangent) -> Result<C64> {
    let mut acc = C64::new(0.0, 0.0);
    for (&(k1, l1, m1), &(k2, l2, m2)) in t1.entries.iter().zip(&t2.entries) {
        if k1 != k2 {
            return Err(SpectralError::InvalidInput("tangent vectors indexed differently".into()));
        }
        let e = d
            .get(k1)
            .ok_or_else(|| SpectralError::InvalidInput(format!("no divisor entry for k = {k1}")))?;
        acc += (l1 * m2 - l2 * m1) / (e.lambda * e.mu);
    }
    Ok(acc * C64::new(0.0, 0.5))
}

/// Central-difference divisor variation along `v` with one Richardson step.
pub fn divisor_tangent(
    p: &PeriodicPotential,
    base: &SpectralDivisor,
    v: &PeriodicPotential,
    h: f64,
    opts: &SpectralOptions,
) -> Result<DivisorTangent> {
    let k_max = base.k_max;
    let seeds = base.lambdas();
    let mut o = *opts;
    o.verify_counts = false;
    let at = |t: f64| -> Result<SpectralDivisor> {
        let q = p.add_scaled(v, t);
        let d = find_divisor_seeded(&MonodromySolver::new(&q), k_max, &seeds, &o)?;
        for (e, b) in d.entries.iter().zip(&base.entries) {
            if (e.lambda - b.lambda).norm() > 0.25 * node_spacing(e.k) {
                return Err(SpectralError::TrackingLost { k: e.k, t });
            }
        }
        Ok(d)
    };
    let ts = [h, -h, h / 2.0, -h / 2.0];
    let ds: Vec<Result<SpectralDivisor>> = ts.iter().map(|&t| at(t)).collect();
    let ds: Vec<SpectralDivisor> = ds.into_iter().collect::<Result<_>>()?;
    let entries = (0..base.entries.len())
        .map(|i| {
            let diff = |a: &SpectralDivisor, b: &SpectralDivisor, hh: f64| {
                (
                    (a.entries[i].lambda - b.entries[i].lambda) / (2.0 * hh),
                    (a.entries[i].mu - b.entries[i].mu) / (2.0 * hh),
                )
            };
            let (l1, m1) = diff(&ds[0], &ds[1], h);
            let (l2, m2) = diff(&ds[2], &ds[3], h / 2.0);
            (base.entries[i].k, (4.0 * l2 - l1) / 3.0, (4.0 * m2 - m1) / 3.0)
        })
        .collect();
    Ok(DivisorTangent { entries })
}

#[derive(Debug, Clone, Serialize)]
pub struct SymplecticReport {
    pub omega: C64,
    pub omega_tilde: C64,
    pub rel_err: f64,
    pub k_max: usize,
    pub h: f64,
}

/// Compare Ω(v₁, v₂) with Ω̃ evaluated on finite-difference divisor variations.
pub fn symplectic_identity_check(
    p: &PeriodicPotential,
    v1: &PeriodicPotential,
    v2: &PeriodicPotential,
    h: f64,
    k_max: usize,
) -> Result<SymplecticReport> {
    let opts = SpectralOptions::default();
    let base = find_divisor_with(&MonodromySolver::new(p), k_max, &opts)?;
    let t1 = divisor_tangent(p, &base, v1, h, &opts)?;
    let t2 = divisor_tangent(p, &base, v2, h, &opts)?;
    let omega = symplectic_omega(v1, v2);
    let omega_tilde = symplectic_omega_tilde(&base, &t1, &t2)?;
    Ok(SymplecticReport {
        omega,
        omega_tilde,
        rel_err: (omega - omega_tilde).norm() / omega.norm(),
        k_max,
        h,
    })
}

/// Monodromy-based Δ for attaching to divisors.
pub fn discriminant(solver: &MonodromySolver, lambda: C64) -> Result<C64> {
    solver.monodromy(lambda).map(|m: Mat2| m.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::vacuum;

    #[test]
    fn annulus_index_basics() {
        for k in -16..=16 {
            assert_eq!(annulus_index(C64::new(lambda_k0(k), 0.0)), k);
        }
        assert_eq!(annulus_index(C64::new(-1.0, 0.0)), 0);
        assert_eq!(annulus_index(C64::new(1.0, 0.0)), 0);
    }

    #[test]
    fn loops_encircle_origin_once() {
        let id = |z: C64| Ok(z);
        let o = CountOptions::default();
        for outer in [true, false] {
            let c = Contour::ZetaLoop { radius: 3.5 * PI, outer };
            assert_eq!(count_zeros(&id, &c, &o).unwrap(), 1);
        }
    }

    #[test]
    fn count_simple() {
        let f = |z: C64| Ok(z - 2.0);
        let c = Contour::Circle { center: C64::new(0.0, 0.0), radius: 1.0 };
        assert_eq!(count_zeros(&f, &c, &CountOptions::default()).unwrap(), 0);
        let f = |z: C64| Ok((z - 0.5) * (z + C64::new(0.0, 0.3)));
        assert_eq!(count_zeros(&f, &c, &CountOptions::default()).unwrap(), 2);
    }

    #[test]
    fn zero_on_contour_is_reported() {
        let f = |z: C64| Ok(z - 1.0);
        let c = Contour::Circle { center: C64::new(0.0, 0.0), radius: 1.0 };
        assert!(matches!(
            count_zeros(&f, &c, &CountOptions::default()),
            Err(SpectralError::ZeroOnContour { .. })
        ));
    }

    #[test]
    fn vacuum_divisor_small() {
        let d = find_divisor(&vacuum(), 3).unwrap();
        for e in &d.entries {
            let l0 = lambda_k0(e.k);
            assert!((e.lambda - l0).norm() < 1e-9 * l0.abs(), "{e:?}");
            assert!((e.mu - mu_k0(e.k)).norm() < 1e-9);
            assert_eq!(e.mult, 1);
        }
    }

    #[test]
    fn window_distance_absorbs_swap() {
        let d = SpectralDivisor::vacuum(4);
        let mut e = d.entries.clone();
        let (a, b) = (e[3], e[5]);
        e[3] = DivisorEntry { k: -1, ..b };
        e[5] = DivisorEntry { k: 1, ..a };
        let d2 = SpectralDivisor { k_max: 4, entries: e };
        assert_eq!(divisor_distance(&d, &d2).unwrap(), 0.0);
        assert!(divisor_distance_window(&d, &d2, 1).unwrap() > 1.0);
    }
}
