//! Band-limited periodic Cauchy data (u, u_y) on [0, 1].

use crate::error::{Result, SpectralError};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use std::collections::BTreeMap;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Trigonometric polynomial pair
/// u(x) = Σ_{|j|≤J} u_j e^{2πijx},  u_y(x) = Σ_{|j|≤J} d_j e^{2πijx}.
///
/// Coefficients are stored densely, index `j + J`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    band_limit: usize,
    grid_size: usize,
    u: Vec<C64>,
    uy: Vec<C64>,
}

/// A tangent direction (δu, δu_y); same representation as a potential.
pub type PotentialVariation = PeriodicPotential;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn min_grid(j: usize) -> usize {
    4 * j + 4
}

impl PeriodicPotential {
    /// Build from dense coefficient vectors of length 2J + 1.
    pub fn from_dense(u: Vec<C64>, uy: Vec<C64>) -> Result<Self> {
        if u.len() != uy.len() || u.len() % 2 == 0 {
            return Err(SpectralError::InvalidInput(format!(
                "coefficient vectors must have equal odd length, got {} and {}",
                u.len(),
                uy.len()
            )));
        }
        if u.iter().chain(uy.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SpectralError::InvalidInput("non-finite coefficient".into()));
        }
        let band_limit = (u.len() - 1) / 2;
        Ok(PeriodicPotential {
            band_limit,
            grid_size: min_grid(band_limit),
            u,
            uy,
        })
    }

    pub fn band_limit(&self) -> usize {
        self.band_limit
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Override the evaluation grid size; must satisfy N ≥ 4J + 4.
    pub fn with_grid_size(mut self, n: usize) -> Result<Self> {
        if n < min_grid(self.band_limit) {
            return Err(SpectralError::InvalidInput(format!(
                "grid size {n} below 4J+4 = {}",
                min_grid(self.band_limit)
            )));
        }
        self.grid_size = n;
        Ok(self)
    }

    /// Coefficient of mode `j` of u (zero outside the band).
    pub fn u_coeff(&self, j: i64) -> C64 {
        self.coeff(&self.u, j)
    }

    pub fn uy_coeff(&self, j: i64) -> C64 {
        self.coeff(&self.uy, j)
    }

    fn coeff(&self, v: &[C64], j: i64) -> C64 {
        let jj = self.band_limit as i64;
        if j.abs() > jj {
            zero()
        } else {
            v[(j + jj) as usize]
        }
    }

    pub fn u_dense(&self) -> &[C64] {
        &self.u
    }

    pub fn uy_dense(&self) -> &[C64] {
        &self.uy
    }

    /// Zero-pad to a larger band limit.
    pub fn padded(&self, band_limit: usize) -> Self {
        if band_limit <= self.band_limit {
            return self.clone();
        }
        let pad = band_limit - self.band_limit;
        let mut u = vec![zero(); 2 * band_limit + 1];
        let mut uy = vec![zero(); 2 * band_limit + 1];
        u[pad..pad + self.u.len()].copy_from_slice(&self.u);
        uy[pad..pad + self.uy.len()].copy_from_slice(&self.uy);
        PeriodicPotential {
            band_limit,
            grid_size: self.grid_size.max(min_grid(band_limit)),
            u,
            uy,
        }
    }

    /// p + t·q (band limits are matched by zero padding).
    pub fn add_scaled(&self, q: &PeriodicPotential, t: f64) -> Self {
        let jj = self.band_limit.max(q.band_limit);
        let a = self.padded(jj);
        let b = q.padded(jj);
        PeriodicPotential {
            band_limit: jj,
            grid_size: a.grid_size.max(b.grid_size),
            u: a.u.iter().zip(&b.u).map(|(x, y)| x + y * t).collect(),
            uy: a.uy.iter().zip(&b.uy).map(|(x, y)| x + y * t).collect(),
        }
    }

    /// Multiply both components by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.u.iter_mut().chain(p.uy.iter_mut()).for_each(|z| *z *= s);
        p
    }

    /// True when both components are real-valued functions.
    pub fn is_real(&self, tol: f64) -> bool {
        let jj = self.band_limit as i64;
        (-jj..=jj).all(|j| {
            (self.u_coeff(j) - self.u_coeff(-j).conj()).norm() <= tol
                && (self.uy_coeff(j) - self.uy_coeff(-j).conj()).norm() <= tol
        })
    }
}

/// The vacuum u = 0.
pub fn vacuum() -> PeriodicPotential {
    PeriodicPotential {
        band_limit: 0,
        grid_size: min_grid(0),
        u: vec![zero()],
        uy: vec![zero()],
    }
}

/// Build a potential from sparse coefficient maps (missing modes are zero).
pub fn make_potential(coeff_u: &BTreeMap<i64, C64>, coeff_uy: &BTreeMap<i64, C64>) -> Result<PeriodicPotential> {
    let jj = coeff_u
        .keys()
        .chain(coeff_uy.keys())
        .map(|j| j.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    let mut u = vec![zero(); 2 * jj + 1];
    let mut uy = vec![zero(); 2 * jj + 1];
    for (&j, &c) in coeff_u {
        u[(j + jj as i64) as usize] = c;
    }
    for (&j, &c) in coeff_uy {
        uy[(j + jj as i64) as usize] = c;
    }
    PeriodicPotential::from_dense(u, uy)
}

/// u(x) = amplitude · cos(2πx), u_y = 0.
pub fn cosine_potential(amplitude: f64) -> PeriodicPotential {
    let h = C64::new(amplitude / 2.0, 0.0);
    let mut m = BTreeMap::new();
    m.insert(1, h);
    m.insert(-1, h);
    make_potential(&m, &BTreeMap::new()).expect("valid coefficients")
}

/// Constant data u ≡ a, u_y ≡ 0.
pub fn constant_potential(a: C64) -> PeriodicPotential {
    let mut m = BTreeMap::new();
    m.insert(0, a);
    make_potential(&m, &BTreeMap::new()).expect("valid coefficients")
}

/// Seeded random real-valued potential with |coefficient of mode j| ≤
/// amplitude·e^{−decay_rate·|j|} for both u and u_y.
pub fn random_potential(seed: u64, band_limit: i64, amplitude: f64, decay_rate: f64) -> Result<PeriodicPotential> {
    if band_limit < 0 {
        return Err(SpectralError::InvalidInput(format!("negative band limit {band_limit}")));
    }
    if !(decay_rate > 0.0) || !amplitude.is_finite() {
        return Err(SpectralError::InvalidInput("decay_rate must be positive and amplitude finite".into()));
    }
    let jj = band_limit as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![zero(); 2 * jj + 1];
    let mut uy = vec![zero(); 2 * jj + 1];
    for v in [&mut u, &mut uy] {
        for j in 0..=jj {
            let bound = amplitude.abs() * (-decay_rate * j as f64).exp();
            let r: f64 = rng.gen::<f64>() * bound;
            if j == 0 {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                v[jj] = C64::new(sign * r, 0.0);
            } else {
                let phase: f64 = rng.gen::<f64>() * TWO_PI;
                let c = C64::from_polar(r, phase);
                v[jj + j] = c;
                v[jj - j] = c.conj();
            }
        }
    }
    PeriodicPotential::from_dense(u, uy)
}

fn trig_sum(coeffs: &[C64], x: f64) -> C64 {
    let jj = (coeffs.len() - 1) / 2;
    let z = C64::from_polar(1.0, TWO_PI * x);
    let zc = z.conj();
    // Horner on the nonnegative and negative halves separately
    let mut pos = zero();
    for j in (0..=jj).rev() {
        pos = pos * z + coeffs[jj + j];
    }
    let mut neg = zero();
    for j in (1..=jj).rev() {
        neg = (neg + coeffs[jj - j]) * zc;
    }
    pos + neg
}

/// (u, u_x, u_y) at x (reduced mod 1).
pub fn evaluate(p: &PeriodicPotential, x: f64) -> (C64, C64, C64) {
    let x = x.rem_euclid(1.0);
    let jj = p.band_limit as i64;
    let ux_coeffs: Vec<C64> = (-jj..=jj)
        .map(|j| p.u_coeff(j) * C64::new(0.0, TWO_PI * j as f64))
        .collect();
    (trig_sum(&p.u, x), trig_sum(&ux_coeffs, x), trig_sum(&p.uy, x))
}

/// τ = e^{−u(0)/2}.
pub fn tau_of(p: &PeriodicPotential) -> C64 {
    (-evaluate(p, 0.0).0 / 2.0).exp()
}

/// (u(x + x0), u_y(x + x0)).
pub fn translate_x(p: &PeriodicPotential, x0: f64) -> PeriodicPotential {
    let jj = p.band_limit as i64;
    let mut q = p.clone();
    for j in -jj..=jj {
        let ph = C64::from_polar(1.0, TWO_PI * j as f64 * x0.rem_euclid(1.0));
        q.u[(j + jj) as usize] *= ph;
        q.uy[(j + jj) as usize] *= ph;
    }
    q
}

/// ⟨p, q⟩ = ⟨u, ũ⟩_{W^{1,2}} + ⟨u_y, ũ_y⟩_{L²}, linear in the first slot.
pub fn pot_inner(p: &PeriodicPotential, q: &PeriodicPotential) -> C64 {
    let jj = p.band_limit.max(q.band_limit) as i64;
    let mut s = zero();
    for j in -jj..=jj {
        let w = 1.0 + (TWO_PI * j as f64).powi(2);
        s += p.u_coeff(j) * q.u_coeff(j).conj() * w + p.uy_coeff(j) * q.uy_coeff(j).conj();
    }
    s
}

pub fn pot_norm(p: &PeriodicPotential) -> f64 {
    pot_inner(p, p).re.max(0.0).sqrt()
}

/// Fourier coefficients (modes −M/2+1 .. M/2−1 folded into a dense, symmetric
/// vector of half-width `half`) of grid samples f(m/M).
pub(crate) fn coefficients_from_grid(samples: &[C64], half: usize) -> Vec<C64> {
    let m = samples.len();
    let mut buf = samples.to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut out = vec![zero(); 2 * half + 1];
    for j in -(half as i64)..=(half as i64) {
        let idx = j.rem_euclid(m as i64) as usize;
        out[(j + half as i64) as usize] = buf[idx] * scale;
    }
    out
}

/// Grid samples f(m/M) of a dense symmetric coefficient vector.
pub(crate) fn grid_from_coefficients(coeffs: &[C64], m: usize) -> Vec<C64> {
    let half = (coeffs.len() - 1) / 2;
    assert!(2 * half < m, "grid too coarse for band");
    let mut buf = vec![zero(); m];
    for j in -(half as i64)..=(half as i64) {
        buf[j.rem_euclid(m as i64) as usize] += coeffs[(j + half as i64) as usize];
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(m).process(&mut buf);
    buf
}

/// Cached truncated Fourier series of e^{u/2}, e^{−u/2} and u_y; evaluation
/// inside the integrator's inner loop costs a few short Horner sums.
#[derive(Debug, Clone)]
pub struct PotentialCache {
    exp_plus: Vec<C64>,
    exp_minus: Vec<C64>,
    uy: Vec<C64>,
    constant: Option<(C64, C64, C64)>,
}

impl PotentialCache {
    pub fn new(p: &PeriodicPotential) -> Self {
        let jj = p.band_limit;
        if (0..p.u.len()).all(|i| i == jj || (p.u[i] == zero() && p.uy[i] == zero())) {
            let u0 = p.u[p.band_limit];
            let d0 = p.uy[p.band_limit];
            return PotentialCache {
                exp_plus: vec![(u0 / 2.0).exp()],
                exp_minus: vec![(-u0 / 2.0).exp()],
                uy: vec![d0],
                constant: Some(((u0 / 2.0).exp(), (-u0 / 2.0).exp(), d0)),
            };
        }
        let mut m = p.grid_size.max(64).next_power_of_two();
        loop {
            let grid = grid_from_coefficients(&p.u, m);
            let ep: Vec<C64> = grid.iter().map(|u| (u / 2.0).exp()).collect();
            let em: Vec<C64> = grid.iter().map(|u| (-u / 2.0).exp()).collect();
            let half = m / 2 - 1;
            let cp = coefficients_from_grid(&ep, half);
            let cm = coefficients_from_grid(&em, half);
            let tail_small = |c: &[C64]| {
                let mx = c.iter().fold(0.0f64, |a, z| a.max(z.norm()));
                let q = half / 2;
                let tail = (0..=2 * half)
                    .filter(|&i| (i as i64 - half as i64).unsigned_abs() as usize > q)
                    .fold(0.0f64, |a, i| a.max(c[i].norm()));
                tail <= 1e-15 * mx
            };
            if (tail_small(&cp) && tail_small(&cm)) || m >= 1 << 14 {
                let trim = |c: Vec<C64>| {
                    let mx = c.iter().fold(0.0f64, |a, z| a.max(z.norm()));
                    let mut keep = 0;
                    for j in 0..=half {
                        if c[half + j].norm() > 1e-16 * mx || c[half - j].norm() > 1e-16 * mx {
                            keep = j;
                        }
                    }
                    c[half - keep..=half + keep].to_vec()
                };
                return PotentialCache {
                    exp_plus: trim(cp),
                    exp_minus: trim(cm),
                    uy: p.uy.clone(),
                    constant: None,
                };
            }
            m *= 2;
        }
    }

    /// (e^{u/2}, e^{−u/2}, u_y) at x.
    #[inline]
    pub fn eval(&self, x: f64) -> (C64, C64, C64) {
        if let Some(c) = self.constant {
            return c;
        }
        (trig_sum(&self.exp_plus, x), trig_sum(&self.exp_minus, x), trig_sum(&self.uy, x))
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }
}

/// Options for the exploratory y-evolution.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Abort when any coefficient magnitude exceeds this bound.
    pub blowup_bound: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { blowup_bound: 1e6 }
    }
}

/// Cauchy data at height `y_target` of u_yy = −u_xx − sinh u, by Strang
/// splitting: half kick with the projected nonlinearity, exact linear drift
/// per Fourier mode, half kick. Modes above `filter_cutoff` are discarded
/// after every kick. The result has band limit `filter_cutoff`.
pub fn evolve_y(
    p: &PeriodicPotential,
    y_target: f64,
    n_steps: usize,
    filter_cutoff: usize,
) -> Result<PeriodicPotential> {
    evolve_y_with(p, y_target, n_steps, filter_cutoff, &EvolveOptions::default())
}

pub fn evolve_y_with(
    p: &PeriodicPotential,
    y_target: f64,
    n_steps: usize,
    filter_cutoff: usize,
    opts: &EvolveOptions,
) -> Result<PeriodicPotential> {
    if n_steps == 0 {
        return Err(SpectralError::InvalidInput("n_steps must be positive".into()));
    }
    let l = filter_cutoff.max(p.band_limit);
    let q = p.padded(l);
    // discard input modes above the cutoff
    let mut u = q.u.clone();
    let mut v = q.uy.clone();
    for j in 0..=l {
        if j > filter_cutoff {
            for w in [&mut u, &mut v] {
                w[l + j] = zero();
                w[l - j] = zero();
            }
        }
    }
    if y_target == 0.0 {
        return PeriodicPotential::from_dense(u, v).and_then(|r| r.with_grid_size(min_grid(l)));
    }
    let m = min_grid(l).next_power_of_two();
    let h = y_target / n_steps as f64;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf = vec![zero(); m];

    let kick = |u: &[C64], v: &mut [C64], dt: f64, buf: &mut Vec<C64>| {
        buf.iter_mut().for_each(|z| *z = zero());
        for j in -(l as i64)..=(l as i64) {
            buf[j.rem_euclid(m as i64) as usize] = u[(j + l as i64) as usize];
        }
        inv.process(buf);
        buf.iter_mut().for_each(|z| *z = z.sinh());
        fwd.process(buf);
        let scale = 1.0 / m as f64;
        for j in -(filter_cutoff as i64)..=(filter_cutoff as i64) {
            let s = buf[j.rem_euclid(m as i64) as usize] * scale;
            v[(j + l as i64) as usize] -= s * dt;
        }
    };
    let drift = |u: &mut [C64], v: &mut [C64], dt: f64| {
        for j in -(filter_cutoff as i64)..=(filter_cutoff as i64) {
            let i = (j + l as i64) as usize;
            if j == 0 {
                u[i] += v[i] * dt;
            } else {
                let k = TWO_PI * j.unsigned_abs() as f64;
                let (ch, sh) = ((k * dt).cosh(), (k * dt).sinh());
                let (u0, v0) = (u[i], v[i]);
                u[i] = u0 * ch + v0 * (sh / k);
                v[i] = u0 * (k * sh) + v0 * ch;
            }
        }
    };

    for step in 0..n_steps {
        kick(&u, &mut v, h / 2.0, &mut buf);
        drift(&mut u, &mut v, h);
        kick(&u, &mut v, h / 2.0, &mut buf);
        let mx = u.iter().chain(v.iter()).fold(0.0f64, |a, z| a.max(z.norm()));
        if !mx.is_finite() || mx > opts.blowup_bound {
            return Err(SpectralError::BlowUp {
                y: h * (step + 1) as f64,
                magnitude: mx,
            });
        }
    }
    PeriodicPotential::from_dense(u, v).and_then(|r| r.with_grid_size(min_grid(l)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_at_zero() {
        let p = cosine_potential(0.3);
        let (u, ux, uy) = evaluate(&p, 0.0);
        assert!((u - 0.3).norm() < 1e-15);
        assert!(ux.norm() < 1e-15);
        assert!(uy.norm() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = random_potential(3, 4, 0.5, 0.5).unwrap();
        let h = 1e-5;
        let x = 0.237;
        let d = (evaluate(&p, x + h).0 - evaluate(&p, x - h).0) / (2.0 * h);
        assert!((d - evaluate(&p, x).1).norm() < 1e-7);
    }

    #[test]
    fn cache_reproduces_exponentials() {
        let p = random_potential(11, 5, 0.6, 0.4).unwrap();
        let cache = PotentialCache::new(&p);
        for i in 0..37 {
            let x = i as f64 / 37.0 + 0.003;
            let (u, _, uy) = evaluate(&p, x);
            let (ep, em, d) = cache.eval(x);
            assert!((ep - (u / 2.0).exp()).norm() < 1e-14);
            assert!((em - (-u / 2.0).exp()).norm() < 1e-14);
            assert!((d - uy).norm() < 1e-14);
        }
    }

    #[test]
    fn grid_roundtrip() {
        let p = random_potential(5, 6, 1.0, 0.3).unwrap();
        let g = grid_from_coefficients(p.u_dense(), 32);
        let c = coefficients_from_grid(&g, 6);
        for (a, b) in c.iter().zip(p.u_dense()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn grid_size_guard() {
        let p = random_potential(1, 3, 0.1, 1.0).unwrap();
        assert!(p.clone().with_grid_size(15).is_err());
        assert!(p.with_grid_size(16).is_ok());
    }

    #[test]
    fn random_rejects_negative_band() {
        assert!(random_potential(0, -1, 1.0, 1.0).is_err());
        assert!(random_potential(0, 2, 1.0, 0.0).is_err());
    }
}
