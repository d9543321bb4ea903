//! Telescoped node products.
//!
//! For nodes λ_k (|k| ≤ K) the entire function
//! F(λ) = c₀(λ) · ∏_{|k|≤K} (λ − λ_k)/(λ − λ_{k,0}),  c₀ = λ^{1/2} sin ζ,
//! vanishes exactly at the λ_k and at the vacuum nodes beyond K. The
//! quotient c₀/(λ − λ_{j,0}) near a vacuum node is evaluated in a form free
//! of cancellation, so F and its cardinal functions stay accurate when a
//! node sits on (or next to) a vacuum node.

use crate::error::{Result, SpectralError};
use crate::monodromy::{lambda_k0, mu_k0, zeta};
use crate::spectral::annulus_index;
use num_complex::Complex64 as C64;

/// c₀(λ) = λ^{1/2} sin ζ(λ) (even in λ^{1/2}).
pub fn c0(lambda: C64) -> C64 {
    lambda.sqrt() * zeta(lambda).sin()
}

fn sinc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// c₀(λ)/(λ − λ_{j,0}), finite at λ = λ_{j,0}.
pub fn c0_over_node(lambda: C64, j: i64) -> C64 {
    let l0 = lambda_k0(j);
    let s = lambda.sqrt();
    let r0 = if j == 0 { C64::new(0.0, 1.0) } else { C64::new(l0.sqrt(), 0.0) };
    let s0 = if (s - r0).norm() <= (s + r0).norm() { r0 } else { -r0 };
    let f = 1.0 - (s * s0).inv();
    let dz = (s - s0) * 0.25 * f;
    s * sinc(dz) * f / (4.0 * (s + s0)) * mu_k0(j)
}

/// Node set with vacuum tail beyond K; index k + K.
#[derive(Debug, Clone)]
pub struct NodeProduct {
    k_max: usize,
    nodes: Vec<C64>,
    /// F'(λ_k) = reduced(k, λ_k).
    derivs: Vec<C64>,
}

impl NodeProduct {
    pub fn new(k_max: usize, nodes: Vec<C64>) -> Result<Self> {
        if nodes.len() != 2 * k_max + 1 {
            return Err(SpectralError::InvalidInput("one node per |k| ≤ K required".into()));
        }
        let mut np = NodeProduct {
            k_max,
            nodes,
            derivs: Vec::new(),
        };
        let derivs: Vec<C64> = (0..np.nodes.len())
            .map(|i| np.reduced(i as i64 - k_max as i64, np.nodes[i]))
            .collect();
        if let Some(i) = derivs.iter().position(|d| !(d.norm() > 0.0) || !d.is_finite()) {
            return Err(SpectralError::Degenerate(format!(
                "coincident nodes at k = {}",
                i as i64 - k_max as i64
            )));
        }
        np.derivs = derivs;
        Ok(np)
    }

    pub fn vacuum(k_max: usize) -> Self {
        let nodes = (-(k_max as i64)..=k_max as i64).map(|k| C64::new(lambda_k0(k), 0.0)).collect();
        Self::new(k_max, nodes).expect("vacuum nodes are distinct")
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn node(&self, k: i64) -> C64 {
        self.nodes[(k + self.k_max as i64) as usize]
    }

    pub fn nodes(&self) -> &[C64] {
        &self.nodes
    }

    fn in_range(&self, j: i64) -> bool {
        j.unsigned_abs() as usize <= self.k_max
    }

    /// ∏ (λ − λ_i)/(λ − λ_{i,0}) times c₀, skipping the numerator factor
    /// `skip` and dividing out nothing for it; the vacuum factor of the
    /// annulus containing λ is absorbed into the stable quotient.
    fn product(&self, lambda: C64, skip: Option<i64>) -> C64 {
        let j = annulus_index(lambda);
        let kk = self.k_max as i64;
        let mut acc = if self.in_range(j) {
            c0_over_node(lambda, j)
        } else {
            c0(lambda)
        };
        for (idx, &l) in self.nodes.iter().enumerate() {
            let i = idx as i64 - kk;
            if Some(i) != skip {
                acc *= lambda - l;
            }
            if i != j {
                acc /= lambda - lambda_k0(i);
            }
        }
        acc
    }

    /// F(λ).
    pub fn eval(&self, lambda: C64) -> C64 {
        self.product(lambda, None)
    }

    /// F(λ)/(λ − λ_k), finite at λ = λ_k.
    pub fn reduced(&self, k: i64, lambda: C64) -> C64 {
        self.product(lambda, Some(k))
    }

    /// F'(λ_k).
    pub fn derivative_at_node(&self, k: i64) -> C64 {
        self.derivs[(k + self.k_max as i64) as usize]
    }

    /// Cardinal function ℓ_k(λ) = F(λ)/(F'(λ_k)(λ − λ_k)), ℓ_k(λ_j) = δ_{kj}.
    pub fn cardinal(&self, k: i64, lambda: C64) -> C64 {
        self.reduced(k, lambda) / self.derivative_at_node(k)
    }

    /// All cardinal functions at λ in index order, O(K) work.
    pub fn cardinals(&self, lambda: C64) -> Vec<C64> {
        let f = self.eval(lambda);
        let kk = self.k_max as i64;
        self.nodes
            .iter()
            .enumerate()
            .map(|(idx, &l)| {
                let k = idx as i64 - kk;
                let d = lambda - l;
                // F carries the factor (λ − λ_k) exactly, so the quotient is
                // accurate unless λ hits the node to rounding
                let r = if d.norm() > 1e-13 * l.norm().max(1e-300) {
                    f / d
                } else {
                    self.reduced(k, lambda)
                };
                r / self.derivs[idx]
            })
            .collect()
    }

    /// g₀(λ) + Σ_k (v_k − g₀(λ_k)) ℓ_k(λ): the interpolant of node values
    /// that agrees with g₀ on the vacuum tail.
    pub fn interpolate<G: Fn(C64) -> C64>(&self, background: &G, values: &[C64], lambda: C64) -> C64 {
        let ls = self.cardinals(lambda);
        let mut acc = background(lambda);
        for (i, l) in ls.iter().enumerate() {
            acc += (values[i] - background(self.nodes[i])) * l;
        }
        acc
    }
}
