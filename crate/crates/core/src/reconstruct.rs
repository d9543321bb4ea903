//! Monodromy from a spectral divisor.
//!
//! With P the telescoped node product of the divisor λ's,
//!   c = τ·c₀·P,   a = a₀ + Σ_k (μ_k − a₀(λ_k)) ℓ_k,   d = d₀ + Σ_k (μ_k⁻¹ − d₀(λ_k)) ℓ_k,
//!   b = (ad − 1)/c,
//! where ℓ_k are the cardinal functions of the node product and
//! τ = (∏ λ_{k,0}/λ_k)^{1/2}. For the truncated divisor (vacuum beyond K)
//! the sums are exact interpolants: the vacuum data contribute nothing.

use crate::cauchy::TaylorDisc;
use crate::error::{Result, SpectralError};
use crate::linalg::Mat2;
use crate::monodromy::{lambda_k0, zeta, MonodromySolver};
use crate::nodes::NodeProduct;
use crate::par;
use crate::potential::{tau_of, PeriodicPotential};
use crate::spectral::{find_divisor_with, tame_violation, SpectralDivisor, SpectralOptions};
use num_complex::Complex64 as C64;
use serde::Serialize;

/// τ = exp(−½ Σ Log(λ_k/λ_{k,0})): the square root continued from 1 along
/// λ_k(t) = (1−t)λ_{k,0} + tλ_k (each ratio moves on a segment from 1).
pub fn tau_from_divisor(d: &SpectralDivisor) -> Result<C64> {
    let mut acc = C64::new(0.0, 0.0);
    for e in &d.entries {
        let r = e.lambda / lambda_k0(e.k);
        if r.im == 0.0 && r.re <= 0.0 {
            return Err(SpectralError::Degenerate(format!(
                "λ_k/λ_k0 on the negative axis at k = {}; homotopy branch undefined",
                e.k
            )));
        }
        acc += r.ln();
    }
    Ok((-0.5 * acc).exp())
}

fn a0(lambda: C64) -> C64 {
    zeta(lambda).cos()
}

#[derive(Debug, Clone)]
pub struct ReconstructedMonodromy {
    divisor: SpectralDivisor,
    tau: C64,
    nodes: NodeProduct,
    da: Vec<C64>,
    dd: Vec<C64>,
}

impl ReconstructedMonodromy {
    pub fn new(d: &SpectralDivisor) -> Result<Self> {
        let tau = tau_from_divisor(d)?;
        let nodes = NodeProduct::new(d.k_max, d.lambdas())?;
        let da = d.entries.iter().map(|e| e.mu - a0(e.lambda)).collect();
        let dd = d.entries.iter().map(|e| e.mu.inv() - a0(e.lambda)).collect();
        Ok(ReconstructedMonodromy {
            divisor: d.clone(),
            tau,
            nodes,
            da,
            dd,
        })
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }

    pub fn divisor(&self) -> &SpectralDivisor {
        &self.divisor
    }

    pub fn k_max(&self) -> usize {
        self.divisor.k_max
    }

    pub fn c(&self, lambda: C64) -> C64 {
        self.tau * self.nodes.eval(lambda)
    }

    /// c'(λ_k).
    pub fn c_prime_at(&self, k: i64) -> C64 {
        self.tau * self.nodes.derivative_at_node(k)
    }

    fn ad(&self, lambda: C64) -> (C64, C64) {
        let ls = self.nodes.cardinals(lambda);
        let base = a0(lambda);
        let (mut a, mut d) = (base, base);
        for (i, l) in ls.iter().enumerate() {
            a += self.da[i] * l;
            d += self.dd[i] * l;
        }
        (a, d)
    }

    pub fn a(&self, lambda: C64) -> C64 {
        self.ad(lambda).0
    }

    pub fn d(&self, lambda: C64) -> C64 {
        self.ad(lambda).1
    }

    fn nearest_node(&self, lambda: C64) -> (usize, f64) {
        self.nodes
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, l)| (i, (lambda - l).norm()))
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
    }

    /// Radius policy: ¼ of the distance from the nearest node to its own
    /// nearest neighbour.
    fn circle_radius(&self, idx: usize) -> f64 {
        let ns = self.nodes.nodes();
        let l = ns[idx];
        let sep = ns
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, m)| (l - m).norm())
            .fold(f64::INFINITY, f64::min);
        // the vacuum tail nodes count as neighbours too
        let k = idx as i64 - self.k_max() as i64;
        let kk = self.k_max() as i64;
        let tail = if k == kk || k == -kk {
            (l - lambda_k0(k + k.signum())).norm()
        } else {
            f64::INFINITY
        };
        0.25 * sep.min(tail)
    }

    fn b_direct(&self, lambda: C64) -> C64 {
        let (a, d) = self.ad(lambda);
        (a * d - 1.0) / self.c(lambda)
    }

    /// b = (ad − 1)/c, by the mean value over a circle when λ is close to
    /// a zero of c.
    pub fn b(&self, lambda: C64) -> Result<C64> {
        let (idx, dist) = self.nearest_node(lambda);
        let rho = self.circle_radius(idx);
        if dist > 0.5 * rho {
            return Ok(self.b_direct(lambda));
        }
        let f = |z: C64| Ok(self.b_direct(z));
        let disc = TaylorDisc::fit(&f, lambda, rho, 32)?;
        let m = disc.mean();
        if !m.is_finite() {
            return Err(SpectralError::Degenerate("mean-value circle hit a node".into()));
        }
        Ok(m)
    }

    pub fn matrix(&self, lambda: C64) -> Result<Mat2> {
        let (a, d) = self.ad(lambda);
        Ok(Mat2::new(a, self.b(lambda)?, self.c(lambda), d))
    }

    /// Δ = a + d.
    pub fn delta(&self, lambda: C64) -> C64 {
        let (a, d) = self.ad(lambda);
        a + d
    }
}

pub fn c_from_divisor(d: &SpectralDivisor, lambda: C64) -> Result<C64> {
    Ok(ReconstructedMonodromy::new(d)?.c(lambda))
}

pub fn a_from_divisor(d: &SpectralDivisor, lambda: C64) -> Result<C64> {
    Ok(ReconstructedMonodromy::new(d)?.a(lambda))
}

pub fn d_from_divisor(d: &SpectralDivisor, lambda: C64) -> Result<C64> {
    Ok(ReconstructedMonodromy::new(d)?.d(lambda))
}

pub fn b_from_divisor(d: &SpectralDivisor, lambda: C64) -> Result<C64> {
    ReconstructedMonodromy::new(d)?.b(lambda)
}

/// Local Hermite data at a zero of c of order `mult`.
#[derive(Debug, Clone)]
pub struct HermiteBlock {
    pub node: C64,
    pub mult: usize,
    /// t_1..t_d of A(λ) = Σ_j t_j c(λ)/(λ − node)^j.
    pub t: Vec<C64>,
    /// Ratio of the largest to the leading coefficient of c/(λ−node)^d on
    /// the circle: conditioning of the triangular solve.
    pub cond: f64,
}

impl HermiteBlock {
    /// A(λ) given the value c(λ).
    pub fn eval(&self, c_val: C64, lambda: C64) -> C64 {
        let w = lambda - self.node;
        let mut acc = C64::new(0.0, 0.0);
        let mut p = C64::new(1.0, 0.0);
        for tj in &self.t {
            p *= w;
            acc += tj / p;
        }
        c_val * acc
    }
}

/// Coefficients t_j with A^{(ℓ)}(node) = μ^{(ℓ)}(node), ℓ < mult, where
/// A = Σ_j t_j c/(λ − node)^j. Both c and μ are expanded on a circle of
/// radius `radius` about the node: writing c = w^d h(w), the t's are the
/// power-series quotient μ/h truncated at order d − 1.
pub fn hermite_block<Cf, Mf>(c: &Cf, mu: &Mf, node: C64, mult: usize, radius: f64) -> Result<HermiteBlock>
where
    Cf: Fn(C64) -> Result<C64> + Sync,
    Mf: Fn(C64) -> Result<C64> + Sync,
{
    if mult == 0 {
        return Err(SpectralError::InvalidInput("multiplicity must be positive".into()));
    }
    let m = 32.max(4 * mult);
    let cd = TaylorDisc::fit(c, node, radius, m)?;
    let md = TaylorDisc::fit(mu, node, radius, m)?;
    let cs = cd.scale();
    if cd.coeffs[..mult].iter().any(|x| x.norm() > 1e-8 * cs) {
        return Err(SpectralError::Degenerate(format!("c does not vanish to order {mult} at the node")));
    }
    // μ must be holomorphic on the disc: a branch point inside shows up as
    // a non-decaying series tail
    let ms = md.scale();
    if md.coeffs[m / 2..].iter().any(|x| x.norm() > 1e-8 * ms.max(1e-300)) {
        return Err(SpectralError::Degenerate("μ not holomorphic near the node (branch point collision)".into()));
    }
    let h = &cd.coeffs[mult..];
    let h0 = h[0];
    let cond = h.iter().take(mult).fold(0.0f64, |a, x| a.max(x.norm())) / h0.norm();
    if !(cond < 1e12) {
        return Err(SpectralError::IllConditioned { what: "Hermite block".into(), cond });
    }
    let mut q = vec![C64::new(0.0, 0.0); mult];
    for n in 0..mult {
        let mut s = md.coeffs[n];
        for i in 1..=n {
            s -= h[i] * q[n - i];
        }
        q[n] = s / h0;
    }
    let t = (1..=mult).map(|j| q[mult - j] * radius.powi(j as i32)).collect();
    Ok(HermiteBlock { node, mult, t, cond })
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    pub k_max: usize,
    pub test_points: usize,
    /// Max relative error of a, b, c, d over the grid.
    pub rel_err: [f64; 4],
    pub max_rel_err: f64,
    pub tau: C64,
    pub tau_direct: C64,
    pub tau_err: f64,
    pub trace_mismatch: f64,
}

/// 20 points of moderate modulus off the real axis, away from divisor nodes.
pub fn default_test_grid() -> Vec<C64> {
    let radii = [0.01, 0.04, 0.15, 0.5, 2.0, 6.0, 25.0, 80.0, 300.0, 1000.0];
    let mut out = Vec::with_capacity(20);
    for (i, &r) in radii.iter().enumerate() {
        let th = 0.6 + 0.17 * i as f64;
        out.push(C64::from_polar(r, th));
        out.push(C64::from_polar(r, -th - 1.1));
    }
    out
}

pub fn roundtrip_report(p: &PeriodicPotential, k_max: usize, test_grid: &[C64]) -> Result<RoundtripReport> {
    roundtrip_report_with(p, k_max, test_grid, &SpectralOptions::default())
}

pub fn roundtrip_report_with(
    p: &PeriodicPotential,
    k_max: usize,
    test_grid: &[C64],
    opts: &SpectralOptions,
) -> Result<RoundtripReport> {
    let solver = MonodromySolver::new(p);
    let div = find_divisor_with(&solver, k_max, opts)?;
    if let Some((k1, k2)) = tame_violation(&div, 1e-10) {
        return Err(SpectralError::NotTame { k1, k2 });
    }
    let rec = ReconstructedMonodromy::new(&div)?;
    let direct = solver.batch(test_grid)?;
    let recs = par::map(test_grid, |&l| rec.matrix(l));
    let recs = crate::monodromy::collect_batch(recs)?;
    let mut rel = [0.0f64; 4];
    let mut tr = 0.0f64;
    for (m, r) in direct.iter().zip(&recs) {
        for (i, (x, y)) in m.entries().iter().zip(r.entries()).enumerate() {
            rel[i] = rel[i].max((x - y).norm() / x.norm());
        }
        tr = tr.max((m.trace() - r.trace()).norm() / m.trace().norm().max(1.0));
    }
    let tau_direct = tau_of(p);
    Ok(RoundtripReport {
        k_max,
        test_points: test_grid.len(),
        rel_err: rel,
        max_rel_err: rel.iter().copied().fold(0.0, f64::max),
        tau: rec.tau(),
        tau_direct,
        tau_err: (rec.tau() - tau_direct).norm(),
        trace_mismatch: tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monodromy::vacuum_monodromy;
    use crate::nodes::c0;

    #[test]
    fn vacuum_fixed_point() {
        let r = ReconstructedMonodromy::new(&SpectralDivisor::vacuum(8)).unwrap();
        assert_eq!(r.tau(), C64::new(1.0, 0.0));
        for &l in &default_test_grid() {
            let m = r.matrix(l).unwrap();
            assert!(m.rel_err(&vacuum_monodromy(l)) < 1e-10, "{l}");
        }
        for z in [C64::new(2.0, 0.0), C64::new(-3.0, 0.0), C64::new(0.0, 0.5)] {
            assert!((r.c(z) - c0(z)).norm() < 1e-12 * c0(z).norm());
        }
    }

    #[test]
    fn b_is_finite_at_nodes() {
        let mut d = SpectralDivisor::vacuum(4);
        d.entries[5].lambda += C64::new(2.0, 1.0);
        d.entries[5].mu = C64::new(-0.9, 0.1);
        let r = ReconstructedMonodromy::new(&d).unwrap();
        let l = d.entries[5].lambda;
        let at = r.b(l).unwrap();
        // symmetric four-point average of direct quotients: b(λ) + O(δ⁴)
        let rho = r.circle_radius(5);
        let dl = 0.02 * rho;
        let near: C64 = [dl, -dl]
            .iter()
            .flat_map(|&x| [C64::new(x, 0.0), C64::new(0.0, x)])
            .map(|h| r.b_direct(l + h))
            .sum::<C64>()
            / 4.0;
        assert!(at.is_finite() && (at - near).norm() < 1e-5 * near.norm(), "{at} {near}");
    }
}
