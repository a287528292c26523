use super::eigen::symmetric_eigen;
use super::matrix::Matrix;
use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest are clamped to zero before
/// taking square roots.
pub const SQRT_CLAMP_RELATIVE: f64 = 1e-12;

/// Principal square root of a symmetric PSD matrix via its eigendecomposition.
pub fn psd_sqrt(a: &Matrix) -> Result<Matrix> {
    let eig = symmetric_eigen(a)?;
    let v = eig.vectors.expect("vectors requested");
    let top = eig.values.iter().fold(0.0f64, |m, &x| m.max(x));
    let floor = SQRT_CLAMP_RELATIVE * top;
    let roots: alloc::vec::Vec<f64> =
        eig.values.iter().map(|&l| if l > floor { libm::sqrt(l) } else { 0.0 }).collect();
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| v[(i, k)] * roots[k] * v[(j, k)]).sum();
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

/// 2-Wasserstein distance between `N(mu1, s1)` and `N(mu2, s2)`:
/// `√(‖μ₁−μ₂‖² + tr(S₁ + S₂ − 2 (S₁^{1/2} S₂ S₁^{1/2})^{1/2}))`.
pub fn wasserstein2_gaussians(mu1: &[f64], s1: &Matrix, mu2: &[f64], s2: &Matrix) -> Result<f64> {
    let n = mu1.len();
    for found in [mu2.len(), s1.rows(), s1.cols(), s2.rows(), s2.cols()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    let mean_term: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    if n == 0 {
        return Ok(0.0);
    }
    let r1 = psd_sqrt(s1)?;
    let mut cross = r1.matmul(s2)?.matmul(&r1)?;
    cross.symmetrize();
    let cross_root = psd_sqrt(&cross)?;
    let cov_term = s1.trace() + s2.trace() - 2.0 * cross_root.trace();
    Ok(libm::sqrt((mean_term + cov_term).max(0.0)))
}
