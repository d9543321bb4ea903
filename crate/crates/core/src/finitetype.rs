//! Projection of a tame divisor onto a nearby finite-type divisor.
//!
//! Δ is rebuilt from node values by telescoped interpolation against the
//! vacuum Δ₀ = 2cos ζ. The iteration
//!   Δ(λ_k) = μ_k + 1/μ_k (|k| ≤ N),  Δ(λ_k) = 2(−1)^k + z_k (N < |k| ≤ K),
//!   z̃_k = z_k − (Δ(η_k) − 2(−1)^k),  Δ'(η_k) = 0,
//! is run to its fixed point, where every critical value outside the first N
//! annuli is ±2, i.e. every gap N < |k| ≤ K is a double point.

use crate::cauchy::TaylorDisc;
use crate::error::{Result, SpectralError};
use crate::monodromy::{delta0, lambda_k0, mu_k0, node_spacing, zeta};
use crate::nodes::NodeProduct;
use crate::par;
use crate::spectral::{
    annulus_index, count_zeros, divisor_distance, Contour, CountOptions, DivisorEntry, SpectralDivisor,
};
use num_complex::Complex64 as C64;
use serde::Serialize;

/// Δ₀ + Σ_k (v_k − Δ₀(λ_k)) ℓ_k over the nodes |k| ≤ K, vacuum beyond.
#[derive(Debug, Clone)]
pub struct InterpolatedDelta {
    np: NodeProduct,
    /// v_k − Δ₀(λ_k), index k + K.
    weights: Vec<C64>,
}

impl InterpolatedDelta {
    pub fn new(k_max: usize, nodes: Vec<C64>, values: &[C64]) -> Result<Self> {
        if values.len() != 2 * k_max + 1 {
            return Err(SpectralError::InvalidInput("one value per node required".into()));
        }
        let np = NodeProduct::new(k_max, nodes)?;
        let weights = np.nodes().iter().zip(values).map(|(&l, &v)| v - delta0(l)).collect();
        Ok(InterpolatedDelta { np, weights })
    }

    pub fn k_max(&self) -> usize {
        self.np.k_max()
    }

    pub fn nodes(&self) -> &[C64] {
        self.np.nodes()
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        let ls = self.np.cardinals(lambda);
        delta0(lambda) + self.weights.iter().zip(&ls).map(|(w, l)| w * l).sum::<C64>()
    }

    /// Δ'(λ) from the logarithmic derivative of the node product. Valid away
    /// from the nodes and the vacuum nodes (used on counting contours).
    pub fn derivative(&self, lambda: C64) -> C64 {
        let s = lambda.sqrt();
        let z = zeta(lambda);
        let zp = (s.inv() - (s * s * s).inv()) / 8.0;
        let d0p = -2.0 * z.sin() * zp;
        // F'/F = c₀'/c₀ + Σ_i [1/(λ − λ_i) − 1/(λ − λ_{i,0})]
        let kk = self.np.k_max() as i64;
        let mut logd = 0.5 / lambda + zp * z.cos() / z.sin();
        for (idx, &l) in self.np.nodes().iter().enumerate() {
            logd += (lambda - l).inv() - (lambda - lambda_k0(idx as i64 - kk)).inv();
        }
        let ls = self.np.cardinals(lambda);
        let mut acc = d0p;
        for ((w, l), &node) in self.weights.iter().zip(&ls).zip(self.np.nodes()) {
            acc += w * l * (logd - (lambda - node).inv());
        }
        acc
    }

    /// Taylor data of Δ on a circle.
    pub fn disc(&self, center: C64, radius: f64, m: usize) -> Result<TaylorDisc> {
        TaylorDisc::fit(&|z| Ok(self.eval(z)), center, radius, m)
    }
}

/// Interpolant with Δ(λ_k) = μ_k + 1/μ_k at every entry of `d`.
pub fn interp_delta(d: &SpectralDivisor) -> Result<InterpolatedDelta> {
    let values: Vec<C64> = d.entries.iter().map(|e| e.mu + e.mu.inv()).collect();
    InterpolatedDelta::new(d.k_max, d.lambdas(), &values)
}

#[derive(Debug, Clone, Copy)]
pub struct FiniteTypeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub taylor_points: usize,
    /// First Cauchy radius as a fraction of the node spacing.
    pub radius_frac: f64,
    pub verify_counts: bool,
    pub count: CountOptions,
}

impl Default for FiniteTypeOptions {
    fn default() -> Self {
        FiniteTypeOptions {
            tol: 1e-10,
            max_iter: 30,
            taylor_points: 32,
            radius_frac: 0.1,
            verify_counts: true,
            count: CountOptions::default(),
        }
    }
}

/// Zero of Δ' near `seed` by recentred Cauchy fits; returns (η, |Δ'(η)|·r/scale).
fn critical_point(delta: &InterpolatedDelta, k: i64, seed: C64, opts: &FiniteTypeOptions) -> Result<(C64, f64)> {
    let sp = node_spacing(k);
    let mut r = opts.radius_frac * sp;
    let mut eta = seed;
    let mut last = f64::INFINITY;
    for _ in 0..16 {
        let disc = delta.disc(eta, r, opts.taylor_points)?;
        let next = disc.critical_point().ok_or_else(|| SpectralError::RootNotFound {
            k,
            reason: "Newton on Δ' left the Cauchy disc".into(),
        })?;
        let moved = (next - eta).norm();
        eta = next;
        // displacement caused by rounding in the linear coefficient
        let c2 = disc.coeffs.get(2).map_or(0.0, |c| c.norm()).max(1e-300);
        let noise = 1e-15 * disc.scale() / c2 * r;
        if moved <= 1e-14 * (1.0 + eta.norm()) + noise || (moved >= last && moved < 1e-8 * r) {
            let disc = delta.disc(eta, r, opts.taylor_points)?;
            let resid = disc.coeffs[1].norm() / disc.scale().max(1e-300);
            return Ok((eta, resid));
        }
        last = moved;
        // shrink once the iterate is well inside, so the fit stays local
        if moved < 0.1 * r {
            r = (0.5 * r).max(0.02 * opts.radius_frac * sp);
        }
    }
    Err(SpectralError::RootNotFound {
        k,
        reason: "critical point iteration did not settle".into(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalSet {
    pub k_max: usize,
    /// (k, η_k, scaled residual of Δ'(η_k)).
    pub eta: Vec<(i64, C64, f64)>,
    /// The extra zero of Δ' and its annulus, if located.
    pub eta_star: Option<C64>,
    pub eta_star_annulus: Option<i64>,
    /// Argument-principle counts of Δ' per annulus (empty if not verified).
    pub counts: Vec<(i64, i64)>,
}

impl CriticalSet {
    pub fn get(&self, k: i64) -> C64 {
        self.eta[(k + self.k_max as i64) as usize].1
    }
}

fn eta_set(delta: &InterpolatedDelta, ks: &[i64], opts: &FiniteTypeOptions) -> Result<Vec<(i64, C64, f64)>> {
    let rows = par::map(ks, |&k| critical_point(delta, k, C64::new(lambda_k0(k), 0.0), opts).map(|(e, r)| (k, e, r)));
    rows.into_iter().collect()
}

/// η_k for |k| ≤ K, verified per annulus; η_* is the surplus zero of Δ'.
pub fn critical_points(delta: &InterpolatedDelta, opts: &FiniteTypeOptions) -> Result<CriticalSet> {
    let kk = delta.k_max() as i64;
    let ks: Vec<i64> = (-kk..=kk).collect();
    let eta = eta_set(delta, &ks, opts)?;
    for &(k, e, _) in &eta {
        if annulus_index(e) != k {
            return Err(SpectralError::RootNotFound {
                k,
                reason: format!("critical point {e} left its annulus"),
            });
        }
    }
    let mut counts = Vec::new();
    let mut star_annulus = None;
    if opts.verify_counts {
        let f = |z: C64| Ok(delta.derivative(z));
        for &k in &ks {
            let c = count_zeros(&f, &Contour::AnnulusBoundary { k }, &opts.count)?;
            counts.push((k, c));
            match c {
                1 => {}
                2 if star_annulus.is_none() => star_annulus = Some(k),
                _ => {
                    return Err(SpectralError::CountMismatch {
                        k,
                        expected: 1,
                        found: c,
                    })
                }
            }
        }
    }
    // the vacuum places the extra zero at λ = 1 inside S_0
    let eta_star = if star_annulus == Some(0) || !opts.verify_counts {
        let mut e = C64::new(1.0, 0.0);
        let mut found = None;
        for _ in 0..12 {
            let disc = delta.disc(e, 0.25, opts.taylor_points)?;
            match disc.critical_point() {
                Some(n) if (n - e).norm() < 1e-14 => {
                    found = Some(n);
                    break;
                }
                Some(n) => e = n,
                None => break,
            }
        }
        found.filter(|&z| annulus_index(z) == 0 && (z - eta[kk as usize].1).norm() > 1e-6)
    } else {
        None
    };
    Ok(CriticalSet {
        k_max: delta.k_max(),
        eta,
        eta_star,
        eta_star_annulus: if opts.verify_counts { star_annulus } else { eta_star.map(|_| 0) },
        counts,
    })
}

/// Result of one iteration of the projection map.
#[derive(Debug, Clone)]
pub struct PhiStep {
    /// Updated tail values, index k + K (zero for |k| ≤ N).
    pub z: Vec<C64>,
    /// η_k for N < |k| ≤ K, in index order.
    pub eta: Vec<(i64, C64)>,
    /// max |Δ(η_k) − 2(−1)^k| before the update.
    pub defect: f64,
}

fn tail_indices(k_max: usize, n: usize) -> Vec<i64> {
    let kk = k_max as i64;
    (-kk..=kk).filter(|k| k.unsigned_abs() as usize > n).collect()
}

/// Initial tail values z_k = μ_k + 1/μ_k − 2(−1)^k, i.e. the actual Δ.
pub fn initial_tail(d: &SpectralDivisor, n: usize) -> Vec<C64> {
    d.entries
        .iter()
        .map(|e| {
            if e.k.unsigned_abs() as usize > n {
                e.mu + e.mu.inv() - 2.0 * mu_k0(e.k)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// One application of the projection map.
pub fn phi_step(d: &SpectralDivisor, n: usize, z: &[C64]) -> Result<PhiStep> {
    phi_step_with(d, n, z, &FiniteTypeOptions::default())
}

pub fn phi_step_with(d: &SpectralDivisor, n: usize, z: &[C64], opts: &FiniteTypeOptions) -> Result<PhiStep> {
    let kk = d.k_max;
    if z.len() != 2 * kk + 1 || n > kk {
        return Err(SpectralError::InvalidInput("tail vector must have length 2K+1 and N ≤ K".into()));
    }
    let values: Vec<C64> = d
        .entries
        .iter()
        .zip(z)
        .map(|(e, &zk)| {
            if e.k.unsigned_abs() as usize > n {
                2.0 * mu_k0(e.k) + zk
            } else {
                e.mu + e.mu.inv()
            }
        })
        .collect();
    let delta = InterpolatedDelta::new(kk, d.lambdas(), &values)?;
    let ks = tail_indices(kk, n);
    let eta = eta_set(&delta, &ks, opts)?;
    let mut z_new = z.to_vec();
    let mut defect = 0.0f64;
    let mut out = Vec::with_capacity(eta.len());
    for (k, e, _) in eta {
        if annulus_index(e) != k {
            return Err(SpectralError::RootNotFound {
                k,
                reason: format!("critical point {e} left its annulus"),
            });
        }
        let r = delta.eval(e) - 2.0 * mu_k0(k);
        defect = defect.max(r.norm());
        z_new[(k + kk as i64) as usize] -= r;
        out.push((k, e));
    }
    Ok(PhiStep {
        z: z_new,
        eta: out,
        defect,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub defect: f64,
    /// ‖z_{i+1} − z_i‖ / ‖z_i − z_{i−1}‖ (sup norms), once defined.
    pub contraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteTypeResult {
    pub n: usize,
    pub k_max: usize,
    pub divisor: SpectralDivisor,
    pub iterations: usize,
    pub defect: f64,
    /// Largest measured contraction: step ratios over the last three
    /// iterations and the probe at the fixed point.
    pub contraction: f64,
    /// ‖Φ(z* + δ) − Φ(z*)‖ / ‖δ‖ for a uniform tail perturbation δ.
    pub probe_contraction: f64,
    pub log: Vec<IterationLog>,
    pub distance: f64,
    pub eta_star: Option<C64>,
    pub eta_star_annulus: Option<i64>,
}

/// Size of the tail perturbation used to probe the contraction.
const PROBE: f64 = 1e-4;

fn sup_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// Iterate the projection map to its fixed point for fixed N. Double points
/// are certified for N < |k| ≤ K; the vacuum tail beyond K is exact.
pub fn finite_type_project(d: &SpectralDivisor, n: usize, opts: &FiniteTypeOptions) -> Result<FiniteTypeResult> {
    let kk = d.k_max as i64;
    let mut z = initial_tail(d, n);
    let mut log = Vec::new();
    let mut last_step: Option<f64> = None;
    for it in 1..=opts.max_iter {
        let step = phi_step_with(d, n, &z, opts)?;
        if step.defect < opts.tol {
            log.push(IterationLog {
                iteration: it,
                defect: step.defect,
                contraction: None,
            });
            let mut entries = d.entries.clone();
            for &(k, e) in &step.eta {
                entries[(k + kk) as usize] = DivisorEntry {
                    k,
                    lambda: e,
                    mu: C64::new(mu_k0(k), 0.0),
                    mult: 1,
                };
            }
            let star = InterpolatedDelta::new(
                d.k_max,
                d.lambdas(),
                &d.entries
                    .iter()
                    .zip(&z)
                    .map(|(e, &zk)| {
                        if e.k.unsigned_abs() as usize > n {
                            2.0 * mu_k0(e.k) + zk
                        } else {
                            e.mu + e.mu.inv()
                        }
                    })
                    .collect::<Vec<_>>(),
            )?;
            let cs = critical_points(&star, opts)?;
            let divisor = SpectralDivisor::new(d.k_max, entries)?;
            let distance = divisor_distance(d, &divisor)?;
            let mut zp = z.clone();
            for (zk, e) in zp.iter_mut().zip(&d.entries) {
                if e.k.unsigned_abs() as usize > n {
                    *zk += PROBE;
                }
            }
            let probe = if n < d.k_max {
                sup_diff(&phi_step_with(d, n, &zp, opts)?.z, &step.z) / PROBE
            } else {
                0.0
            };
            let tail = log.iter().rev().take(3).filter_map(|l: &IterationLog| l.contraction);
            return Ok(FiniteTypeResult {
                n,
                k_max: d.k_max,
                divisor,
                iterations: it,
                defect: step.defect,
                contraction: tail.fold(probe, f64::max),
                probe_contraction: probe,
                log,
                distance,
                eta_star: cs.eta_star,
                eta_star_annulus: cs.eta_star_annulus,
            });
        }
        let dz = sup_diff(&step.z, &z);
        let contraction = last_step.filter(|&p| p > 0.0).map(|p| dz / p);
        log.push(IterationLog {
            iteration: it,
            defect: step.defect,
            contraction,
        });
        last_step = Some(dz);
        z = step.z;
    }
    Err(SpectralError::NotConverged {
        iterations: opts.max_iter,
        defect: log.last().map_or(f64::NAN, |l| l.defect),
    })
}

/// N = max(4, K/4), doubled on non-convergence up to K.
pub fn finite_type_project_auto(d: &SpectralDivisor, opts: &FiniteTypeOptions) -> Result<FiniteTypeResult> {
    let mut n = (d.k_max / 4).max(4).min(d.k_max);
    loop {
        match finite_type_project(d, n, opts) {
            Err(SpectralError::NotConverged { .. }) if n < d.k_max => n = (2 * n).min(d.k_max),
            r => return r,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_data_reproduce_delta0() {
        let d = SpectralDivisor::vacuum(6);
        let delta = interp_delta(&d).unwrap();
        for z in [C64::new(3.0, 1.0), C64::new(-0.2, 0.4), C64::new(900.0, -20.0)] {
            let want = delta0(z);
            assert!((delta.eval(z) - want).norm() < 1e-12 * want.norm().max(1.0));
        }
    }

    #[test]
    fn analytic_derivative_matches_cauchy() {
        let nodes: Vec<C64> = (-5i64..=5)
            .map(|k| C64::new(lambda_k0(k), 0.0) * C64::new(1.0 + 0.01 * k as f64, 0.003))
            .collect();
        let values: Vec<C64> = (-5i64..=5).map(|k| C64::new(2.0 * mu_k0(k) + 0.05 / (1.0 + k.abs() as f64), 0.01)).collect();
        let delta = InterpolatedDelta::new(5, nodes, &values).unwrap();
        for z in [C64::new(40.0, 25.0), C64::new(0.3, -0.7), C64::new(-5.0, 2.0)] {
            let disc = delta.disc(z, 0.05 * z.norm(), 32).unwrap();
            let want = disc.derivative(1);
            assert!((delta.derivative(z) - want).norm() < 1e-9 * want.norm(), "z={z}");
        }
    }

    #[test]
    fn vacuum_critical_points_are_nodes() {
        let d = SpectralDivisor::vacuum(4);
        let cs = critical_points(&interp_delta(&d).unwrap(), &FiniteTypeOptions::default()).unwrap();
        for &(k, e, _) in &cs.eta {
            assert!((e - lambda_k0(k)).norm() < 1e-10 * lambda_k0(k).abs(), "k={k}");
        }
        assert_eq!(cs.eta_star_annulus, Some(0));
        assert!((cs.eta_star.unwrap() - 1.0).norm() < 1e-10);
    }

    #[test]
    fn vacuum_is_a_fixed_point() {
        let d = SpectralDivisor::vacuum(5);
        let z = initial_tail(&d, 2);
        let s = phi_step(&d, 2, &z).unwrap();
        assert!(s.defect < 1e-12);
        assert!(s.z.iter().all(|v| v.norm() < 1e-12));
        let r = finite_type_project(&d, 2, &FiniteTypeOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
    }
}
