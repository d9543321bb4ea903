//! Weighted sequence norms, bounding sequences on the annuli S_k, and the
//! numerical harnesses for the monodromy / spectral asymptotics and the
//! exponential decay of gaps.

use crate::error::{Result, SpectralError};
use crate::monodromy::{lambda_k0, mu_k0, node_spacing, vacuum_monodromy, zeta, MonodromySolver};
use crate::par;
use crate::potential::{tau_of, PeriodicPotential};
use crate::spectral::{zeta_loop_point, BranchPointSet, SpectralDivisor};
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::PI;

/// Weight exponents (n for k → +∞, m for k → −∞) of ℓ²_{n,m}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WeightedSeqNorm {
    pub n: i32,
    pub m: i32,
}

impl WeightedSeqNorm {
    pub fn new(n: i32, m: i32) -> Self {
        WeightedSeqNorm { n, m }
    }

    /// |k^n| for k > 0, |k^m| for k < 0, 1 at k = 0.
    pub fn weight(&self, k: i64) -> f64 {
        let a = k.unsigned_abs() as f64;
        match k.signum() {
            0 => 1.0,
            1 => a.powi(self.n),
            _ => a.powi(self.m),
        }
    }

    pub fn norm(&self, seq: &[(i64, f64)]) -> f64 {
        seq.iter().map(|&(k, v)| (self.weight(k) * v).powi(2)).sum::<f64>().sqrt()
    }
}

/// ‖a‖_{ℓ²_{n,m}} over the available indices.
pub fn l2nm_norm(seq: &[(i64, f64)], n: i32, m: i32) -> f64 {
    WeightedSeqNorm::new(n, m).norm(seq)
}

/// a_k = max over samples in S_k of |f(λ)|·e^{−s|Im ζ(λ)|}.
#[derive(Debug, Clone, Serialize)]
pub struct BoundingSequence {
    pub s: f64,
    pub k_max: usize,
    /// (k, a_k) for |k| ≤ K.
    pub values: Vec<(i64, f64)>,
    pub samples_per_annulus: usize,
}

impl BoundingSequence {
    pub fn get(&self, k: i64) -> f64 {
        self.values[(k + self.k_max as i64) as usize].1
    }

    pub fn norm(&self, w: WeightedSeqNorm) -> f64 {
        w.norm(&self.values)
    }

    /// Values restricted to k ≥ 0 (the λ → ∞ end) or k ≤ 0.
    pub fn end(&self, infinity: bool) -> Vec<(i64, f64)> {
        self.values
            .iter()
            .copied()
            .filter(|&(k, _)| if infinity { k >= 0 } else { k <= 0 })
            .collect()
    }

    /// Number of the given samples where |f|e^{−s|Im ζ|} exceeds a_k.
    pub fn violations(&self, samples: &[(i64, C64, C64)]) -> usize {
        samples
            .iter()
            .filter(|&&(k, l, v)| k.unsigned_abs() as usize <= self.k_max && weighted(v, l, self.s) > self.get(k))
            .count()
    }
}

fn weighted(v: C64, lambda: C64, s: f64) -> f64 {
    v.norm() * (-s * zeta(lambda).im.abs()).exp()
}

/// Sample points of S_k: `radii` ζ-radii across the band (boundaries and
/// middle) times `angles` angles on the relevant sheet(s).
pub fn annulus_samples(k: i64, radii: usize, angles: usize) -> Vec<C64> {
    let a = k.unsigned_abs() as f64;
    let (lo, hi) = if k == 0 { (0.05 * PI, 0.5 * PI) } else { ((a - 0.5) * PI, (a + 0.5) * PI) };
    let sheets: &[bool] = match k.signum() {
        0 => &[true, false],
        1 => &[true],
        _ => &[false],
    };
    let mut out = Vec::with_capacity(radii * angles * sheets.len());
    for &outer in sheets {
        for i in 0..radii {
            let r = if radii == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (radii - 1) as f64 };
            for j in 0..angles {
                // half-open angle grid avoids double counting the negative axis
                let th = -PI / 2.0 + PI * (j as f64 + 0.5) / angles as f64;
                out.push(zeta_loop_point(r, th, outer));
            }
        }
    }
    out
}

/// Default sampling: 3 radii × 24 angles.
pub const DEFAULT_RADII: usize = 3;
pub const DEFAULT_ANGLES: usize = 24;

/// Bounding sequence of `f` of type `s` over |k| ≤ K.
pub fn bounding_sequence<F>(f: &F, s: f64, k_max: usize, samples_per_annulus: usize) -> Result<BoundingSequence>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let angles = (samples_per_annulus / DEFAULT_RADII).max(4);
    let ks: Vec<i64> = (-(k_max as i64)..=k_max as i64).collect();
    let rows = par::map(&ks, |&k| -> Result<(i64, f64)> {
        let mut best = 0.0f64;
        for l in annulus_samples(k, DEFAULT_RADII, angles) {
            best = best.max(weighted(f(l)?, l, s));
        }
        Ok((k, best))
    });
    Ok(BoundingSequence {
        s,
        k_max,
        values: crate::monodromy::collect_batch(rows)?,
        samples_per_annulus: DEFAULT_RADII * angles,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThmMReport {
    pub k_max: usize,
    pub tau: C64,
    /// ‖a − a₀‖ in ℓ²_{0,0}.
    pub a_norm: f64,
    /// (‖b − τ⁻¹b₀‖ in ℓ²₁ at ∞, ‖b − τb₀‖ in ℓ²₋₁ at 0).
    pub b_norm: (f64, f64),
    /// (‖c − τc₀‖ in ℓ²₋₁ at ∞, ‖c − τ⁻¹c₀‖ in ℓ²₁ at 0).
    pub c_norm: (f64, f64),
    pub d_norm: f64,
    pub a_seq: BoundingSequence,
    pub b_inf_seq: BoundingSequence,
    pub b_zero_seq: BoundingSequence,
    pub c_inf_seq: BoundingSequence,
    pub c_zero_seq: BoundingSequence,
    pub d_seq: BoundingSequence,
}

impl ThmMReport {
    /// The four norms (a, b, c, d), two-ended ones combined in ℓ².
    pub fn norms(&self) -> [f64; 4] {
        [
            self.a_norm,
            self.b_norm.0.hypot(self.b_norm.1),
            self.c_norm.0.hypot(self.c_norm.1),
            self.d_norm,
        ]
    }
}

/// Bounding sequences (type 1) for M − M₀ with the τ powers of each end.
pub fn thm_m_report(p: &PeriodicPotential, k_max: usize) -> Result<ThmMReport> {
    thm_m_report_sampled(p, k_max, DEFAULT_RADII, DEFAULT_ANGLES)
}

pub fn thm_m_report_sampled(p: &PeriodicPotential, k_max: usize, radii: usize, angles: usize) -> Result<ThmMReport> {
    let solver = MonodromySolver::new(p);
    let tau = tau_of(p);
    let ti = tau.inv();
    let ks: Vec<i64> = (-(k_max as i64)..=k_max as i64).collect();
    // per annulus: max weighted deviation of the six comparisons
    let rows = par::map(&ks, |&k| -> Result<[f64; 6]> {
        let mut best = [0.0f64; 6];
        for l in annulus_samples(k, radii, angles) {
            let m = solver.monodromy(l)?;
            let m0 = vacuum_monodromy(l);
            let vals = [
                m.a - m0.a,
                m.b - ti * m0.b,
                m.b - tau * m0.b,
                m.c - tau * m0.c,
                m.c - ti * m0.c,
                m.d - m0.d,
            ];
            for (b, v) in best.iter_mut().zip(vals) {
                *b = b.max(weighted(v, l, 1.0));
            }
        }
        Ok(best)
    });
    let rows = crate::monodromy::collect_batch(rows)?;
    let seq = |i: usize| BoundingSequence {
        s: 1.0,
        k_max,
        values: ks.iter().zip(&rows).map(|(&k, r)| (k, r[i])).collect(),
        samples_per_annulus: radii * angles,
    };
    let (a_seq, b_inf_seq, b_zero_seq, c_inf_seq, c_zero_seq, d_seq) = (seq(0), seq(1), seq(2), seq(3), seq(4), seq(5));
    let w00 = WeightedSeqNorm::new(0, 0);
    Ok(ThmMReport {
        k_max,
        tau,
        a_norm: a_seq.norm(w00),
        b_norm: (
            WeightedSeqNorm::new(1, 0).norm(&b_inf_seq.end(true)),
            WeightedSeqNorm::new(0, -1).norm(&b_zero_seq.end(false)),
        ),
        c_norm: (
            WeightedSeqNorm::new(-1, 0).norm(&c_inf_seq.end(true)),
            WeightedSeqNorm::new(0, 1).norm(&c_zero_seq.end(false)),
        ),
        d_norm: d_seq.norm(w00),
        a_seq,
        b_inf_seq,
        b_zero_seq,
        c_inf_seq,
        c_zero_seq,
        d_seq,
    })
}

/// One row of a deviation table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeviationRow {
    pub k: i64,
    pub deviation: f64,
    pub weight: f64,
    pub weighted: f64,
}

fn table(devs: &[(i64, f64)], w: WeightedSeqNorm) -> Vec<DeviationRow> {
    devs.iter()
        .map(|&(k, d)| DeviationRow {
            k,
            deviation: d,
            weight: w.weight(k),
            weighted: w.weight(k) * d,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ThmSpectralReport {
    pub k_max: usize,
    /// ‖λ_k − λ_{k,0}‖ in ℓ²_{−1,3}.
    pub lambda_norm: f64,
    /// ‖μ_k − μ_{k,0}‖ in ℓ²_{0,0}.
    pub mu_norm: f64,
    /// ‖max_ν |κ_{k,ν} − λ_{k,0}|‖ in ℓ²_{−1,3}.
    pub kappa_norm: f64,
    pub lambda_table: Vec<DeviationRow>,
    pub mu_table: Vec<DeviationRow>,
    pub kappa_table: Vec<DeviationRow>,
}

pub fn thm_spectral_report(d: &SpectralDivisor, b: &BranchPointSet) -> Result<ThmSpectralReport> {
    if d.k_max != b.k_max {
        return Err(SpectralError::InvalidInput("divisor and branch points use different K".into()));
    }
    let w13 = WeightedSeqNorm::new(-1, 3);
    let w00 = WeightedSeqNorm::new(0, 0);
    let mut dl = Vec::new();
    let mut dm = Vec::new();
    let mut dk = Vec::new();
    for e in &d.entries {
        let bp = b
            .get(e.k)
            .ok_or_else(|| SpectralError::InvalidInput(format!("no branch pair at k = {}", e.k)))?;
        let l0 = lambda_k0(e.k);
        dl.push((e.k, (e.lambda - l0).norm()));
        dm.push((e.k, (e.mu - mu_k0(e.k)).norm()));
        dk.push((e.k, (bp.kappa1 - l0).norm().max((bp.kappa2 - l0).norm())));
    }
    Ok(ThmSpectralReport {
        k_max: d.k_max,
        lambda_norm: w13.norm(&dl),
        mu_norm: w00.norm(&dm),
        kappa_norm: w13.norm(&dk),
        lambda_table: table(&dl, w13),
        mu_table: table(&dm, w00),
        kappa_table: table(&dk, w13),
    })
}

/// Log-linear fit log(q_n/σ_n) ≈ log C − r|n| of one quantity, with σ_n the
/// local node spacing (which removes the λ ↦ 1/λ scale between the ends).
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub constant: f64,
    pub r_squared: f64,
    /// Samples above the measurement floor that entered the fit.
    pub used: usize,
    /// Residuals log(q_n/σ_n) − (log C − r|n|), the s_n proxy.
    pub residuals: Vec<(i64, f64)>,
    /// True when fewer than three samples rose above the floor.
    pub floor_limited: bool,
    /// Rate divided by the expected 2πy₀ or πy₀, if y₀ was given.
    pub rate_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpDecayReport {
    pub n_min: usize,
    pub n_max: usize,
    /// |κ_{n,1} − κ_{n,2}|.
    pub gap: DecayFit,
    /// |λ_n − κ_{n,*}|.
    pub divisor_offset: DecayFit,
    /// |μ_n − (−1)^n|.
    pub mu_offset: DecayFit,
}

/// Relative measurement floor of the extracted quantities.
pub const DECAY_FLOOR: f64 = 1e-10;

fn fit_decay(samples: &[(i64, f64)], floor: &dyn Fn(i64) -> f64, expected: Option<f64>) -> DecayFit {
    let pts: Vec<(f64, f64, i64)> = samples
        .iter()
        .filter(|&&(n, q)| q > floor(n))
        .map(|&(n, q)| (n.unsigned_abs() as f64, (q / node_spacing(n)).ln(), n))
        .collect();
    if pts.len() < 3 {
        return DecayFit {
            rate: 0.0,
            constant: 0.0,
            r_squared: 0.0,
            used: pts.len(),
            residuals: Vec::new(),
            floor_limited: true,
            rate_ratio: None,
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let residuals: Vec<(i64, f64)> = pts.iter().map(|p| (p.2, p.1 - (icpt + slope * p.0))).collect();
    let ss_res: f64 = residuals.iter().map(|r| r.1 * r.1).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 0.0 };
    DecayFit {
        rate: -slope,
        constant: icpt.exp(),
        r_squared,
        used: pts.len(),
        residuals,
        floor_limited: false,
        rate_ratio: expected.map(|e| -slope / e),
    }
}

/// Fits over n_min ≤ |n| ≤ n_max (both ends).
pub fn exp_decay_report(
    d: &SpectralDivisor,
    b: &BranchPointSet,
    y0_hint: Option<f64>,
    n_min: usize,
    n_max: usize,
) -> Result<ExpDecayReport> {
    if d.k_max < n_max || b.k_max < n_max {
        return Err(SpectralError::InvalidInput("divisor/branch data do not reach n_max".into()));
    }
    let mut gap = Vec::new();
    let mut off = Vec::new();
    let mut mu = Vec::new();
    for n in -(n_max as i64)..=n_max as i64 {
        if (n.unsigned_abs() as usize) < n_min {
            continue;
        }
        let e = d.get(n).expect("index within K");
        let bp = b.get(n).expect("index within K");
        gap.push((n, bp.gap()));
        off.push((n, (e.lambda - bp.midpoint()).norm()));
        mu.push((n, (e.mu - mu_k0(n)).norm()));
    }
    let lam_floor = |n: i64| DECAY_FLOOR * (1.0 + lambda_k0(n).abs());
    let mu_floor = |_: i64| DECAY_FLOOR;
    Ok(ExpDecayReport {
        n_min,
        n_max,
        gap: fit_decay(&gap, &lam_floor, y0_hint.map(|y| 2.0 * PI * y)),
        divisor_offset: fit_decay(&off, &lam_floor, y0_hint.map(|y| 2.0 * PI * y)),
        mu_offset: fit_decay(&mu, &mu_floor, y0_hint.map(|y| PI * y)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_norms() {
        assert_eq!(l2nm_norm(&[(2, 1.0)], -1, 3), 0.5);
        assert_eq!(l2nm_norm(&[(-2, 1.0)], -1, 3), 8.0);
        assert_eq!(l2nm_norm(&[], 0, 0), 0.0);
    }

    #[test]
    fn samples_lie_in_their_annulus() {
        for k in [-3i64, -1, 0, 1, 4] {
            for l in annulus_samples(k, 3, 8) {
                let j = crate::spectral::annulus_index(l);
                // boundary samples may tie toward the smaller |k|
                assert!(j == k || (j - k).abs() == 1, "k={k} j={j}");
            }
        }
    }

    #[test]
    fn linear_decay_is_recovered() {
        let samples: Vec<(i64, f64)> = (4..=12).map(|n: i64| (n, node_spacing(n) * 3.0 * (-0.7 * n as f64).exp())).collect();
        let f = fit_decay(&samples, &|_| 0.0, Some(0.7));
        assert!((f.rate - 0.7).abs() < 1e-12 && (f.constant - 3.0).abs() < 1e-10);
        assert!(f.r_squared > 1.0 - 1e-12);
        assert!((f.rate_ratio.unwrap() - 1.0).abs() < 1e-12);
    }
}
