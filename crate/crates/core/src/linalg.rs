use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// 2×2 complex matrix, row-major entries `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Mat2::new(one, zero, zero, one)
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    /// Inverse of a unimodular matrix (adjugate).
    pub fn inverse_unimodular(&self) -> Self {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    /// Max-modulus entry norm.
    pub fn norm_max(&self) -> f64 {
        self.a
            .norm()
            .max(self.b.norm())
            .max(self.c.norm())
            .max(self.d.norm())
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()).sqrt()
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_entries(e: [C64; 4]) -> Self {
        Mat2::new(e[0], e[1], e[2], e[3])
    }

    /// ‖self − other‖_F / ‖other‖_F.
    pub fn rel_err(&self, reference: &Mat2) -> f64 {
        (*self - *reference).norm_fro() / reference.norm_fro()
    }

    /// (Δ² − 4) written as (a − d)² + 4bc; equal to tr² − 4 when det = 1 and
    /// accurate near double points where a − d, b, c are all small.
    pub fn disc(&self) -> C64 {
        let amd = self.a - self.d;
        amd * amd + 4.0 * self.b * self.c
    }

    /// Matrix exponential by scaling and squaring of a Taylor series.
    pub fn exp(&self) -> Mat2 {
        let n = self.norm_max();
        let mut s = 0;
        let mut scaled = *self;
        if n > 0.25 {
            s = (n / 0.25).log2().ceil() as i32;
            scaled = self.scale(C64::new(0.5f64.powi(s), 0.0));
        }
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for k in 1..30 {
            term = (term * scaled).scale(C64::new(1.0 / k as f64, 0.0));
            sum = sum + term;
            if term.norm_max() < 1e-18 * sum.norm_max() {
                break;
            }
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

/// Solve a dense real linear system by Gaussian elimination with partial
/// pivoting. Returns `None` for a numerically singular matrix.
pub fn solve_real(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Dense complex solve with partial pivoting.
pub fn solve_complex(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Option<Vec<C64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let t = a[col][k];
                a[row][k] -= f * t;
            }
            let t = b[col];
            b[row] -= f * t;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = C64::new(0.0, 0.0);
        for k in i + 1..n {
            s += a[i][k] * x[k];
        }
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Inverse of a complex square matrix (column by column).
pub fn invert_complex(a: &[Vec<C64>]) -> Option<Vec<Vec<C64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[j] = C64::new(1.0, 0.0);
        cols.push(solve_complex(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// 1-norm condition estimate κ₁(A) = ‖A‖₁‖A⁻¹‖₁ computed from an explicit inverse.
pub fn condition_1(a: &[Vec<C64>]) -> f64 {
    let norm1 = |m: &[Vec<C64>]| {
        let n = m.len();
        (0..n)
            .map(|j| (0..n).map(|i| m[i][j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match invert_complex(a) {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn exp_of_rotation_generator() {
        let t = 0.7;
        let g = Mat2::new(c(0.0, 0.0), c(-t, 0.0), c(t, 0.0), c(0.0, 0.0));
        let e = g.exp();
        let r = Mat2::new(c(t.cos(), 0.0), c(-t.sin(), 0.0), c(t.sin(), 0.0), c(t.cos(), 0.0));
        assert!(e.rel_err(&r) < 1e-15);
    }

    #[test]
    fn exp_large_argument_is_unimodular() {
        let g = Mat2::new(c(0.3, 2.0), c(-7.0, 1.0), c(5.0, -3.0), c(-0.3, -2.0));
        let e = g.exp();
        assert!((e.det() - 1.0).norm() < 1e-10 * e.norm_max().powi(2));
    }

    #[test]
    fn disc_matches_trace_form_for_unimodular() {
        let g = Mat2::new(c(0.1, 0.2), c(0.4, -0.3), c(-0.2, 0.5), c(-0.1, -0.2)).exp();
        let tr = g.trace();
        assert!((g.disc() - (tr * tr - 4.0)).norm() < 1e-13);
    }

    #[test]
    fn real_solve() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_real(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn complex_inverse() {
        let a = vec![vec![c(1.0, 1.0), c(2.0, 0.0)], vec![c(0.0, -1.0), c(3.0, 0.5)]];
        let inv = invert_complex(&a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let s: C64 = (0..2).map(|k| a[i][k] * inv[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).norm() < 1e-14);
            }
        }
    }
}
