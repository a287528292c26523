use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::eigen::{symmetric_eigenvalues, tridiagonal_ql};
use super::matrix::{axpy, dot, norm2, Matrix};
use crate::Result;

/// Largest size handled by the dense eigensolver; larger inputs use Lanczos.
pub const EXACT_EIG_MAX_DIM: usize = 4096;
pub const LANCZOS_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumMethod {
    ExactEig,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// `lambda_max / lambda_min`, or `+inf` when `lambda_min <= 0`.
    #[serde(with = "crate::serde_float")]
    pub cond: f64,
    pub method: SpectrumMethod,
}

impl SpectrumSummary {
    fn new(lambda_min: f64, lambda_max: f64, method: SpectrumMethod) -> Self {
        let cond = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
        Self { lambda_max, lambda_min, cond, method }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.lambda_min > 0.0
    }
}

/// Extremal eigenvalues and condition number of a symmetric matrix.
pub fn spectrum(a: &Matrix) -> Result<SpectrumSummary> {
    let method =
        if a.rows() <= EXACT_EIG_MAX_DIM { SpectrumMethod::ExactEig } else { SpectrumMethod::Lanczos };
    spectrum_with(a, method)
}

pub fn spectrum_with(a: &Matrix, method: SpectrumMethod) -> Result<SpectrumSummary> {
    a.ensure_symmetric()?;
    match method {
        SpectrumMethod::ExactEig => {
            let ev = symmetric_eigenvalues(a)?;
            let (lo, hi) = (ev.first().copied().unwrap_or(0.0), ev.last().copied().unwrap_or(0.0));
            Ok(SpectrumSummary::new(lo, hi, method))
        }
        SpectrumMethod::Lanczos => {
            let (lo, hi) = lanczos_extremes(a, LANCZOS_ITERATIONS, 0)?;
            Ok(SpectrumSummary::new(lo, hi, method))
        }
    }
}

/// Extremal Ritz values after `steps` Lanczos iterations with full
/// reorthogonalisation, started from a seeded Gaussian vector.
pub fn lanczos_extremes(a: &Matrix, steps: usize, seed: u64) -> Result<(f64, f64)> {
    let n = a.rows();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let steps = steps.min(n).max(1);
    let mut rng = crate::seeded_rng(seed);
    let mut q: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let qn = norm2(&q);
    q.iter_mut().for_each(|x| *x /= qn);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut w = vec![0.0; n];
    for j in 0..steps {
        a.matvec_into(&q, &mut w);
        let alpha = dot(&q, &w);
        alphas.push(alpha);
        axpy(-alpha, &q, &mut w);
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            axpy(-beta, prev, &mut w);
        }
        basis.push(q.clone());
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let beta = norm2(&w);
        if j + 1 == steps || beta <= 1e-14 * alpha.abs().max(1.0) {
            break;
        }
        betas.push(beta);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / beta);
    }
    let k = alphas.len();
    let mut d = alphas;
    let mut e = vec![0.0; k];
    e[..k - 1].copy_from_slice(&betas[..k - 1]);
    tridiagonal_ql(&mut d, &mut e, None)?;
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Sufficient condition for floating-point Cholesky to succeed on an `n x n`
/// SPD matrix with condition number `cond`, given a `mantissa_bits`-bit mantissa:
/// `cond ≤ 1 / (2^{-t}·3.9·n^{3/2})` and `3n·2^{-t} < 0.1`. Requires `n > 10`.
pub fn cholesky_stability_predicate(cond: f64, n: usize, mantissa_bits: u32) -> Result<bool> {
    if n <= 10 {
        return Err(crate::Error::invalid("n", "the stability predicate requires n > 10"));
    }
    let unit = libm::exp2(-(mantissa_bits as f64));
    let nf = n as f64;
    let threshold = 1.0 / (unit * 3.9 * nf * libm::sqrt(nf));
    Ok(cond <= threshold && 3.0 * nf * unit < 0.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kms_matrix;

    #[test]
    fn identity_and_diagonal() {
        let s = spectrum(&Matrix::identity(6)).unwrap();
        assert_eq!((s.lambda_max, s.lambda_min, s.cond), (1.0, 1.0, 1.0));
        let s = spectrum(&Matrix::from_diagonal(&[4.0, 1.0])).unwrap();
        assert_eq!((s.lambda_max, s.lambda_min, s.cond), (4.0, 1.0, 4.0));
        assert_eq!(s.method, SpectrumMethod::ExactEig);
    }

    #[test]
    fn indefinite_gets_infinite_condition() {
        let s = spectrum(&Matrix::from_diagonal(&[1.0, -1.0])).unwrap();
        assert!(!s.is_positive_definite());
        assert_eq!(s.cond, f64::INFINITY);
    }

    #[test]
    fn lanczos_finds_extremes_of_wide_spectrum() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let s = spectrum_with(&Matrix::from_diagonal(&diag), SpectrumMethod::Lanczos).unwrap();
        assert!((s.lambda_max - n as f64).abs() / (n as f64) < 1e-6);
        assert!((s.lambda_min - 1.0).abs() < 0.5);
        assert_eq!(s.method, SpectrumMethod::Lanczos);
    }

    #[test]
    fn lanczos_agrees_with_dense_on_kms() {
        let a = kms_matrix(0.7, 100).unwrap();
        let exact = spectrum_with(&a, SpectrumMethod::ExactEig).unwrap();
        let lz = spectrum_with(&a, SpectrumMethod::Lanczos).unwrap();
        assert!((exact.lambda_max - lz.lambda_max).abs() < 1e-8 * exact.lambda_max);
        assert!((exact.lambda_min - lz.lambda_min).abs() < 1e-8 * exact.lambda_max);
    }

    #[test]
    fn stability_predicate_examples() {
        assert!(cholesky_stability_predicate(1e3, 100, 52).unwrap());
        assert!(!cholesky_stability_predicate(1e16, 100, 52).unwrap());
        assert!(cholesky_stability_predicate(1e3, 10, 52).is_err());
        // Monotone in mantissa length at fixed n.
        for cond in [1.0, 1e3, 1e6, 1e9, 1e12] {
            let single = cholesky_stability_predicate(cond, 100, 23).unwrap();
            let double = cholesky_stability_predicate(cond, 100, 52).unwrap();
            assert!(!single || double);
        }
        assert!(cholesky_stability_predicate(1e3, 100, 23).unwrap());
        assert!(!cholesky_stability_predicate(1e6, 100, 23).unwrap());
    }
}
