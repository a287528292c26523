use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::{Error, Result};

/// Geometric jitter escalation used when a factorization fails.
///
/// Attempts are made at jitter `0`, then `initial`, `initial * factor`, ...
/// while the jitter does not exceed `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl JitterPolicy {
    /// `1e-6`, `x10`, capped at `1e-2`, all relative to the mean diagonal of `a`.
    pub fn relative_to(a: &Matrix) -> Self {
        let n = a.rows().max(1) as f64;
        let mean_diag = (a.trace() / n).abs().max(f64::MIN_POSITIVE);
        Self { initial: 1e-6 * mean_diag, factor: 10.0, max: 1e-2 * mean_diag }
    }

    /// Only the unjittered attempt.
    pub fn none() -> Self {
        Self { initial: 0.0, factor: 1.0, max: 0.0 }
    }

    fn schedule(&self) -> impl Iterator<Item = f64> + '_ {
        let mut next = Some(0.0);
        core::iter::from_fn(move || {
            let current = next?;
            next = if current == 0.0 {
                (self.initial > 0.0 && self.initial <= self.max).then_some(self.initial)
            } else {
                let j = current * self.factor;
                (self.factor > 1.0 && j <= self.max * (1.0 + 1e-12)).then_some(j)
            };
            Some(current)
        })
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CholeskyStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone)]
pub struct CholeskyOutcome {
    pub status: CholeskyStatus,
    pub factor: Option<Cholesky>,
    /// Jitter of the successful attempt, or the last one tried on failure.
    pub jitter_used: f64,
}

impl CholeskyOutcome {
    pub fn is_success(&self) -> bool {
        self.status == CholeskyStatus::Success
    }

    /// Converts a failure into [`Error::CholeskyFailed`].
    pub fn into_result(self) -> Result<Cholesky> {
        match self.factor {
            Some(f) => Ok(f),
            None => Err(Error::CholeskyFailed { jitter: self.jitter_used }),
        }
    }
}

/// Factorizes a symmetric matrix, escalating jitter per `policy` on failure.
///
/// Failure to factorize is reported through [`CholeskyStatus::Failure`];
/// only malformed input is an error.
pub fn cholesky(a: &Matrix, policy: &JitterPolicy) -> Result<CholeskyOutcome> {
    a.ensure_symmetric()?;
    let mut last = 0.0;
    for jitter in policy.schedule() {
        last = jitter;
        if let Some(l) = factor_lower(a, jitter) {
            return Ok(CholeskyOutcome {
                status: CholeskyStatus::Success,
                factor: Some(Cholesky { l, jitter }),
                jitter_used: jitter,
            });
        }
    }
    Ok(CholeskyOutcome { status: CholeskyStatus::Failure, factor: None, jitter_used: last })
}

/// Row-oriented Cholesky–Banachiewicz on the lower triangle of `a + jitter·I`.
/// Returns `None` as soon as a pivot is not strictly positive and finite.
fn factor_lower(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = {
                let li = &l.row(i)[..j];
                let lj = &l.row(j)[..j];
                dot(li, lj)
            };
            if i == j {
                let pivot = a[(i, i)] + jitter - s;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return None;
                }
                l[(i, i)] = libm::sqrt(pivot);
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

impl Cholesky {
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            y[i] = (y[i] - dot(&row[..i], &y[..i])) / row[i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let row = self.l.row(i);
            x[i] /= row[i];
            let xi = x[i];
            for (xk, &lik) in x[..i].iter_mut().zip(&row[..i]) {
                *xk -= lik * xi;
            }
        }
        x
    }

    /// Solves `(A + jitter·I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Column-wise `L⁻¹ B`.
    pub fn solve_lower_matrix(&self, b: &Matrix) -> Matrix {
        self.map_columns(b, |c| self.solve_lower(c))
    }

    /// Column-wise `(A + jitter·I)⁻¹ B`.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        self.map_columns(b, |c| self.solve(c))
    }

    fn map_columns(&self, b: &Matrix, f: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
        assert_eq!(b.rows(), self.dim());
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = f(&b.col(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `ln |A + jitter·I|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| libm::log(*d)).sum::<f64>()
    }

    /// Explicit inverse of `A + jitter·I`.
    pub fn inverse(&self) -> Matrix {
        let mut inv = self.solve_matrix(&Matrix::identity(self.dim()));
        inv.symmetrize();
        inv
    }

    /// `L Lᵀ`, for reconstruction checks.
    pub fn reconstruct(&self) -> Matrix {
        let lt = self.l.transpose();
        self.l.matmul(&lt).expect("square factor")
    }
}
