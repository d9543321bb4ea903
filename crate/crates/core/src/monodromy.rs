//! Connection matrix, extended frame and monodromy; vacuum closed forms.

use crate::error::{Result, SpectralError};
use crate::linalg::Mat2;
use crate::ode::{self, ErrorNorm, OdeError, OdeOptions};
use crate::par;
use crate::potential::{evaluate, PeriodicPotential, PotentialCache};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn check_lambda(lambda: C64) -> Result<()> {
    if lambda == C64::new(0.0, 0.0) || !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(SpectralError::InvalidInput(format!("spectral parameter must be finite and nonzero, got {lambda}")));
    }
    Ok(())
}

/// ζ(λ) = (λ^{1/2} + λ^{−1/2})/4 with the principal square root.
pub fn zeta(lambda: C64) -> C64 {
    let s = lambda.sqrt();
    (s + s.inv()) / 4.0
}

/// M₀(λ) = [[cos ζ, −λ^{−1/2} sin ζ], [λ^{1/2} sin ζ, cos ζ]].
pub fn vacuum_monodromy(lambda: C64) -> Mat2 {
    let s = lambda.sqrt();
    let z = (s + s.inv()) / 4.0;
    let (c, sn) = (z.cos(), z.sin());
    Mat2::new(c, -sn / s, s * sn, c)
}

/// Δ₀(λ) = 2 cos ζ(λ).
pub fn delta0(lambda: C64) -> C64 {
    2.0 * zeta(lambda).cos()
}

/// λ_{k,0} = 8π²k² + 4πk√(4π²k²−1) − 1; negative k use λ_{−k,0} = 1/λ_{k,0}.
pub fn lambda_k0(k: i64) -> f64 {
    if k == 0 {
        return -1.0;
    }
    let a = k.unsigned_abs() as f64;
    let v = 8.0 * PI * PI * a * a - 1.0 + 4.0 * PI * a * (4.0 * PI * PI * a * a - 1.0).sqrt();
    if k > 0 {
        v
    } else {
        1.0 / v
    }
}

/// μ_{k,0} = (−1)^k.
pub fn mu_k0(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Distance from λ_{k,0} to the nearest neighbouring vacuum node; the
/// natural length scale of annulus k near its centre.
pub fn node_spacing(k: i64) -> f64 {
    let l = lambda_k0(k);
    let d1 = (lambda_k0(k + 1) - l).abs();
    let d2 = (lambda_k0(k - 1) - l).abs();
    d1.min(d2)
}

/// dx-part of the connection form at (x, λ).
pub fn alpha_x(p: &PeriodicPotential, x: f64, lambda: C64) -> Result<Mat2> {
    check_lambda(lambda)?;
    let (u, _, uy) = evaluate(p, x);
    let ep = (u / 2.0).exp();
    let em = (-u / 2.0).exp();
    let i = C64::new(0.0, 1.0);
    Ok(Mat2::new(i * uy, -ep - em / lambda, ep + lambda * em, -i * uy).scale(C64::new(0.25, 0.0)))
}

#[derive(Debug, Clone, Copy)]
pub struct MonodromyOptions {
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for MonodromyOptions {
    fn default() -> Self {
        MonodromyOptions {
            rtol: 1e-11,
            max_steps: 400_000,
        }
    }
}

/// Frame value at a sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub x: f64,
    pub frame: Mat2,
}

/// Integrator bound to one potential; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct MonodromySolver {
    cache: PotentialCache,
    opts: MonodromyOptions,
}

impl MonodromySolver {
    pub fn new(p: &PeriodicPotential) -> Self {
        Self::with_options(p, MonodromyOptions::default())
    }

    pub fn with_options(p: &PeriodicPotential, opts: MonodromyOptions) -> Self {
        MonodromySolver {
            cache: PotentialCache::new(p),
            opts,
        }
    }

    pub fn options(&self) -> MonodromyOptions {
        self.opts
    }

    /// F(x) at the sorted sample points, F(0) = 1.
    ///
    /// Internally integrates the balanced gauge G = D F D⁻¹ with
    /// D = diag(λ^{1/2}, 1), whose off-diagonal entries are of equal size at
    /// both ends of ℂ*; the branch of λ^{1/2} cancels on the way back.
    pub fn frames(&self, lambda: C64, xs: &[f64]) -> Result<Vec<Mat2>> {
        check_lambda(lambda)?;
        if xs.windows(2).any(|w| w[1] < w[0]) || xs.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(SpectralError::InvalidInput("x samples must be sorted within [0, 1]".into()));
        }
        let s = lambda.sqrt();
        let si = s.inv();
        let i4 = C64::new(0.0, 0.25);
        let cache = &self.cache;
        let rhs = |x: f64, g: &[C64], dg: &mut [C64]| {
            let (ep, em, uy) = cache.eval(x);
            let a11 = i4 * uy;
            let a12 = -(s * ep + em * si) * 0.25;
            let a21 = (ep * si + s * em) * 0.25;
            dg[0] = a11 * g[0] + a12 * g[2];
            dg[1] = a11 * g[1] + a12 * g[3];
            dg[2] = a21 * g[0] - a11 * g[2];
            dg[3] = a21 * g[1] - a11 * g[3];
        };
        let scale = s.norm().max(si.norm());
        let opts = OdeOptions {
            rtol: self.opts.rtol,
            atol: 1e-300,
            h_init: Some(0.25 * (4.0 / scale).min(1.0)),
            h_max: f64::INFINITY,
            max_steps: self.opts.max_steps,
            norm: ErrorNorm::Normwise,
        };
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut g = [one, zero, zero, one];
        let mut out = vec![Mat2::identity(); xs.len()];
        ode::integrate(rhs, 0.0, &mut g, xs, &opts, |i, y| {
            out[i] = Mat2::new(y[0], y[1] * si, y[2] * s, y[3]);
        })
        .map_err(|e| match e {
            OdeError::StepUnderflow { x } | OdeError::NonFinite { x } => SpectralError::StepUnderflow { x, lambda },
            OdeError::MaxSteps { x, steps } => SpectralError::MaxSteps { x, steps, lambda },
        })?;
        Ok(out)
    }

    /// M(λ) = F(1).
    pub fn monodromy(&self, lambda: C64) -> Result<Mat2> {
        Ok(self.frames(lambda, &[1.0])?[0])
    }

    /// Order-preserving parallel sweep; failures are aggregated.
    pub fn batch(&self, lambdas: &[C64]) -> Result<Vec<Mat2>> {
        let res = par::map(lambdas, |&l| self.monodromy(l));
        collect_batch(res)
    }
}

pub(crate) fn collect_batch<T>(res: Vec<Result<T>>) -> Result<Vec<T>> {
    let total = res.len();
    let mut out = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (i, r) in res.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(SpectralError::Batch { total, failures })
    }
}

/// Extended frame samples F(x), F(0) = 1.
pub fn extended_frame(p: &PeriodicPotential, lambda: C64, xs: &[f64]) -> Result<Vec<FrameSample>> {
    let frames = MonodromySolver::new(p).frames(lambda, xs)?;
    Ok(xs.iter().zip(frames).map(|(&x, frame)| FrameSample { x, frame }).collect())
}

pub fn monodromy(p: &PeriodicPotential, lambda: C64) -> Result<Mat2> {
    MonodromySolver::new(p).monodromy(lambda)
}

pub fn monodromy_batch(p: &PeriodicPotential, lambdas: &[C64]) -> Result<Vec<Mat2>> {
    MonodromySolver::new(p).batch(lambdas)
}

/// Record for CLI emission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonodromyRecord {
    pub lambda: [f64; 2],
    #[serde(rename = "M")]
    pub m: [[f64; 2]; 4],
    pub det_err: f64,
}

impl MonodromyRecord {
    pub fn new(lambda: C64, m: &Mat2) -> Self {
        let e = m.entries();
        MonodromyRecord {
            lambda: [lambda.re, lambda.im],
            m: [[e[0].re, e[0].im], [e[1].re, e[1].im], [e[2].re, e[2].im], [e[3].re, e[3].im]],
            det_err: (m.det() - 1.0).norm(),
        }
    }
}
