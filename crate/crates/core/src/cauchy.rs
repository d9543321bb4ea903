//! Taylor data of holomorphic functions from samples on a circle.
//!
//! A [`TaylorDisc`] stores the coefficients of f(center + r·w) in the scaled
//! variable w, obtained by the trapezoidal rule on |w| = 1 (exponentially
//! accurate for holomorphic f). Root finding, derivatives and mean values
//! are all read off this polynomial.

use crate::error::{Result, SpectralError};
use crate::par;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct TaylorDisc {
    pub center: C64,
    pub radius: f64,
    /// Coefficients in w = (λ − center)/radius.
    pub coeffs: Vec<C64>,
}

/// The m sample points center + r·e^{2πij/m}.
pub fn circle_points(center: C64, radius: f64, m: usize) -> Vec<C64> {
    (0..m)
        .map(|j| center + C64::from_polar(radius, 2.0 * PI * j as f64 / m as f64))
        .collect()
}

impl TaylorDisc {
    /// Coefficients from values at [`circle_points`].
    pub fn from_samples(center: C64, radius: f64, values: &[C64]) -> Self {
        let m = values.len();
        let coeffs = (0..m)
            .map(|n| {
                let mut acc = C64::new(0.0, 0.0);
                for (j, v) in values.iter().enumerate() {
                    // reduce the phase index to keep the angle small
                    let idx = (j * n) % m;
                    acc += v * C64::from_polar(1.0, -2.0 * PI * idx as f64 / m as f64);
                }
                acc / m as f64
            })
            .collect();
        TaylorDisc { center, radius, coeffs }
    }

    /// Sample `f` on the circle (in parallel) and build the disc.
    pub fn fit<F>(f: &F, center: C64, radius: f64, m: usize) -> Result<Self>
    where
        F: Fn(C64) -> Result<C64> + Sync,
    {
        if !(radius > 0.0) || m < 4 {
            return Err(SpectralError::InvalidInput(format!("bad Cauchy circle r={radius}, m={m}")));
        }
        let pts = circle_points(center, radius, m);
        let vals: Result<Vec<C64>> = par::map(&pts, |&z| f(z)).into_iter().collect();
        Ok(Self::from_samples(center, radius, &vals?))
    }

    fn w_of(&self, z: C64) -> C64 {
        (z - self.center) / self.radius
    }

    fn poly(&self, w: C64) -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            dp = dp * w + p;
            p = p * w + c;
        }
        (p, dp)
    }

    /// f(z) from the truncated series; accurate for |z − center| well inside r.
    pub fn eval(&self, z: C64) -> C64 {
        self.poly(self.w_of(z)).0
    }

    /// f'(z) from the truncated series.
    pub fn eval_derivative(&self, z: C64) -> C64 {
        self.poly(self.w_of(z)).1 / self.radius
    }

    /// f^{(n)}(center).
    pub fn derivative(&self, n: usize) -> C64 {
        if n >= self.coeffs.len() {
            return C64::new(0.0, 0.0);
        }
        let fact: f64 = (1..=n).map(|i| i as f64).product();
        self.coeffs[n] * fact / self.radius.powi(n as i32)
    }

    /// Mean value over the circle, i.e. f(center).
    pub fn mean(&self) -> C64 {
        self.coeffs[0]
    }

    /// Largest scaled coefficient modulus.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Order of vanishing at the center: the first n whose scaled coefficient
    /// exceeds `rel` times the largest one.
    pub fn vanishing_order(&self, rel: f64) -> usize {
        let s = self.scale();
        self.coeffs.iter().position(|c| c.norm() > rel * s).unwrap_or(self.coeffs.len())
    }

    /// Newton on the series polynomial started at z0; `None` if it leaves
    /// the disc or stalls.
    pub fn root_near(&self, z0: C64) -> Option<C64> {
        poly_newton(&self.coeffs, self.w_of(z0), None).map(|w| self.center + w * self.radius)
    }

    /// Zero of f' closest to the center.
    pub fn critical_point(&self) -> Option<C64> {
        let d: Vec<C64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, c)| c * n as f64)
            .collect();
        poly_newton(&d, C64::new(0.0, 0.0), None).map(|w| self.center + w * self.radius)
    }

    /// Zero of f closest to the center after removing the known zeros in
    /// `deflate` (scaled coordinates handled internally).
    pub fn root_deflated(&self, z0: C64, deflate: &[C64]) -> Option<C64> {
        let ws: Vec<C64> = deflate.iter().map(|&z| self.w_of(z)).collect();
        poly_newton(&self.coeffs, self.w_of(z0), Some(&ws)).map(|w| self.center + w * self.radius)
    }
}

fn poly_newton(c: &[C64], w0: C64, deflate: Option<&[C64]>) -> Option<C64> {
    let mut w = w0;
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for a in c.iter().rev() {
            dp = dp * w + p;
            p = p * w + a;
        }
        // Newton on p / ∏(w − w_i): p'/p − Σ 1/(w − w_i)
        let mut step = p / dp;
        if let Some(ws) = deflate {
            let corr: C64 = ws.iter().map(|&wi| (w - wi).inv()).sum();
            let denom = dp / p - corr;
            step = denom.inv();
        }
        if !step.re.is_finite() || !step.im.is_finite() {
            return if p.norm() == 0.0 { Some(w) } else { None };
        }
        w -= step;
        if w.norm() > 4.0 {
            return None;
        }
        let sn = step.norm();
        if sn <= 1e-15 * (1.0 + w.norm()) || (sn >= last && sn < 1e-10) {
            return Some(w);
        }
        last = sn;
    }
    Some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_series_and_derivatives() {
        let f = |z: C64| Ok(z.exp());
        let d = TaylorDisc::fit(&f, C64::new(0.3, -0.2), 0.5, 24).unwrap();
        let e = C64::new(0.3, -0.2).exp();
        for n in 0..5 {
            assert!((d.derivative(n) - e).norm() < 1e-12, "n={n}");
        }
        let z = C64::new(0.5, 0.0);
        assert!((d.eval(z) - z.exp()).norm() < 1e-13);
    }

    #[test]
    fn roots_and_critical_point() {
        let f = |z: C64| Ok((z - 0.1) * (z + C64::new(0.0, 0.2)) * (z - 3.0));
        let d = TaylorDisc::fit(&f, C64::new(0.0, 0.0), 1.0, 16).unwrap();
        let r1 = d.root_near(C64::new(0.0, 0.0)).unwrap();
        let r2 = d.root_deflated(C64::new(0.0, 0.0), &[r1]).unwrap();
        let mut rs = [r1, r2];
        rs.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((rs[0] - C64::new(0.0, -0.2)).norm() < 1e-13);
        assert!((rs[1] - 0.1).norm() < 1e-13);
        let g = |z: C64| Ok((z - 0.25) * (z - 0.25) - 1e-6);
        let d = TaylorDisc::fit(&g, C64::new(0.0, 0.0), 1.0, 8).unwrap();
        assert!((d.critical_point().unwrap() - 0.25).norm() < 1e-13);
        assert_eq!(d.vanishing_order(1e-8), 0);
    }
}
