//! Thin wrapper around a dense Cholesky factorization with a ridge fallback.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Col, Mat, Side};

use crate::error::{Error, Result};

/// Ridge policy applied only when a plain factorization fails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    /// First ridge, relative to the supplied scale (usually the GP variance).
    pub initial: f64,
    /// Multiplier between successive attempts.
    pub growth: f64,
    pub attempts: u32,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            initial: 1e-10,
            growth: 100.0,
            attempts: 4,
        }
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
pub struct SpdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
    logdet: f64,
    jitter: f64,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor")
            .field("n", &self.n)
            .field("logdet", &self.logdet)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl SpdFactor {
    /// Factorizes `a`; on failure retries with `scale * jitter.initial * growth^k` on the diagonal.
    ///
    /// `year` is only used to label the error.
    pub fn new(a: &Mat<f64>, scale: f64, jitter: Jitter, year: i32) -> Result<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        if let Ok(llt) = a.llt(Side::Lower) {
            return Ok(Self::from_llt(llt, n, 0.0));
        }
        let mut ridge = scale.abs().max(f64::MIN_POSITIVE) * jitter.initial;
        for _ in 0..jitter.attempts {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] += ridge;
            }
            if let Ok(llt) = b.llt(Side::Lower) {
                return Ok(Self::from_llt(llt, n, ridge));
            }
            ridge *= jitter.growth;
        }
        Err(Error::Factorization {
            year,
            jitter: ridge / jitter.growth,
        })
    }

    fn from_llt(llt: faer::linalg::solvers::Llt<f64>, n: usize, jitter: f64) -> Self {
        let l = llt.L();
        let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
        SpdFactor {
            llt,
            n,
            logdet,
            jitter,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Ridge that had to be added, 0 when the plain matrix factored.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }

    /// Solves `A X = B` for a matrix right-hand side.
    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    /// Forward substitution `L⁻¹ b`.
    pub fn half_solve(&self, b: &[f64]) -> Vec<f64> {
        let l = self.llt.L();
        let mut x = b.to_vec();
        for i in 0..self.n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }

    /// `L z`, used to draw correlated samples.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let l = self.llt.L();
        (0..self.n).map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum()).collect()
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        self.half_solve(b).iter().map(|v| v * v).sum()
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Mat<f64> {
        Mat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 0) => 4.0,
            (1, 1) => 5.0,
            (2, 2) => 6.0,
            (0, 1) | (1, 0) => 1.0,
            (1, 2) | (2, 1) => 2.0,
            _ => 0.5,
        })
    }

    #[test]
    fn solve_and_logdet() {
        let a = spd3();
        let f = SpdFactor::new(&a, 1.0, Jitter::default(), 0).unwrap();
        // det by cofactor expansion
        let det = 4.0 * (30.0 - 4.0) - 1.0 * (6.0 - 1.0) + 0.5 * (2.0 - 2.5);
        assert!((f.logdet() - f64::ln(det)).abs() < 1e-12);
        let b = [1.0, -2.0, 3.0];
        let x = f.solve(&b);
        let back = mat_vec(&a, &x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!((f.quad_form(&b) - dot(&b, &x)).abs() < 1e-12);
        // L (L⁻¹ b) = b
        for (u, v) in f.lower_mul(&f.half_solve(&b)).iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn singular_matrix_gets_ridge() {
        let a = Mat::from_fn(2, 2, |_, _| 1.0);
        let f = SpdFactor::new(&a, 1.0, Jitter::default(), 3).unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_reports_year() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 3.0 });
        match SpdFactor::new(&a, 1.0, Jitter::default(), 2011) {
            Err(Error::Factorization { year, .. }) => assert_eq!(year, 2011),
            other => panic!("unexpected {other:?}"),
        }
    }
}
