//! Dense LU factorization with partial pivoting.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-14;

/// `P A = L U` for a square row-major matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix is not {n}x{n}");
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot) =
                (k..n)
                    .map(|r| (r, a[r * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot < PIVOT_TOL {
                return Err(Error::SingularSystem { pivot });
            }
            if pivot_row != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let diag = a[k * n + k];
            for r in k + 1..n {
                let factor = a[r * n + k] / diag;
                a[r * n + k] = factor;
                if factor != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= factor * a[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ y = z, then x = Pᵀ y.
        let mut z = b.to_vec();
        for r in 0..n {
            let mut acc = z[r];
            for c in 0..r {
                acc -= self.lu[c * n + r] * z[c];
            }
            z[r] = acc / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut acc = z[r];
            for c in r + 1..n {
                acc -= self.lu[c * n + r] * z[c];
            }
            z[r] = acc;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }
}

/// Max-norm residual `‖A x − b‖_∞`.
pub fn residual(a: &[f64], n: usize, x: &[f64], b: &[f64]) -> f64 {
    (0..n)
        .map(|r| {
            let ax: f64 = (0..n).map(|c| a[r * n + c] * x[c]).sum();
            (ax - b[r]).abs()
        })
        .fold(0.0, f64::max)
}
