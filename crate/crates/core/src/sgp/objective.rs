//! Negative evidence lower bound of the clustered model and its gradient with
//! respect to the log-hyperparameters.
//!
//! Parameter order: the kernel's [`Kernel::log_params`] followed by `ln σ²`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ClusteredModel, Estimate, TraceMode};
use crate::linalg::audit::{self, SystemKind};
use crate::linalg::{cholesky, dot, rademacher, Cholesky, JitterPolicy, Matrix};
use crate::{Dataset, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGradient {
    pub value: f64,
    /// Standard error of `value` from stochastic trace estimation (`0` when exact).
    pub stderr: f64,
    pub gradient: Vec<f64>,
}

/// `KL(q ‖ p) + (N/2) ln(2πσ²) + (N/|B|)/(2σ²) Σ_{i∈B} [(y_i − μ_i)² + s_i]`,
/// where `μ_i`, `s_i` are the clustered posterior mean and variance at `x_i`.
///
/// Minimizing this maximizes the evidence lower bound. With `z = X`, `u = y`
/// and `Λ = σ²I` it equals the exact negative log marginal likelihood.
pub fn training_objective(model: &ClusteredModel, batch: &Dataset, n_total: usize, mode: TraceMode) -> Result<Estimate> {
    let e = evaluate(model, batch, n_total, mode, false)?;
    Ok(Estimate { value: e.value, stderr: e.stderr })
}

/// [`training_objective`] together with its analytic gradient.
pub fn objective_and_gradient(
    model: &ClusteredModel,
    batch: &Dataset,
    n_total: usize,
    mode: TraceMode,
) -> Result<ObjectiveGradient> {
    evaluate(model, batch, n_total, mode, true)
}

/// Trace functionals of `A⁻¹ = (K + Λ)⁻¹` needed by the objective.
enum Traces {
    Exact { inv: Matrix, p: Matrix },
    Probes { alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>, probes: Vec<Vec<f64>> },
}

impl Traces {
    fn new(factor: &Cholesky, k: &Matrix, mode: TraceMode, want_grad: bool) -> Result<Self> {
        match mode {
            TraceMode::Exact => {
                let inv = factor.inverse();
                let p = if want_grad { inv.matmul(k)?.matmul(&inv)? } else { Matrix::zeros(0, 0) };
                Ok(Traces::Exact { inv, p })
            }
            TraceMode::Hutchinson { probes: count, seed } => {
                if count == 0 {
                    return Err(Error::invalid("probes", "at least one probe is required"));
                }
                let m = k.rows();
                let mut rng = crate::seeded_rng(seed);
                let (mut alpha, mut beta, mut probes) = (Vec::new(), Vec::new(), Vec::new());
                for _ in 0..count {
                    let mut z = vec![0.0; m];
                    rademacher(&mut rng, &mut z);
                    alpha.push(factor.solve(&z));
                    beta.push(factor.solve(&k.matvec(&z)?));
                    probes.push(z);
                }
                Ok(Traces::Probes { alpha, beta, probes })
            }
        }
    }

    /// `tr(A⁻¹K)` with its standard error.
    fn inv_k(&self, k: &Matrix, lambda: &[f64]) -> Result<(f64, f64)> {
        match self {
            Traces::Exact { inv, .. } => {
                let m = lambda.len() as f64;
                Ok((m - lambda.iter().enumerate().map(|(j, l)| l * inv[(j, j)]).sum::<f64>(), 0.0))
            }
            Traces::Probes { alpha, probes, .. } => {
                let samples: Vec<f64> =
                    alpha.iter().zip(probes).map(|(a, z)| Ok(dot(a, &k.matvec(z)?))).collect::<Result<_>>()?;
                Ok(mean_and_stderr(&samples))
            }
        }
    }

    /// `tr(A⁻¹ D A⁻¹ K)` for symmetric `D`.
    fn inv_d_inv_k(&self, d: &Matrix) -> Result<f64> {
        match self {
            Traces::Exact { p, .. } => Ok(frobenius_inner(d, p)),
            Traces::Probes { alpha, beta, .. } => {
                let s: Vec<f64> =
                    alpha.iter().zip(beta).map(|(a, b)| Ok(dot(a, &d.matvec(b)?))).collect::<Result<_>>()?;
                Ok(mean_and_stderr(&s).0)
            }
        }
    }

    /// `tr(A⁻¹ diag(λ))`.
    fn inv_diag(&self, lambda: &[f64]) -> f64 {
        match self {
            Traces::Exact { inv, .. } => lambda.iter().enumerate().map(|(j, l)| l * inv[(j, j)]).sum(),
            Traces::Probes { alpha, probes, .. } => {
                let s: Vec<f64> = alpha
                    .iter()
                    .zip(probes)
                    .map(|(a, z)| a.iter().zip(z).zip(lambda).map(|((a, z), l)| a * l * z).sum())
                    .collect();
                mean_and_stderr(&s).0
            }
        }
    }

    /// `tr(A⁻¹ diag(λ) A⁻¹ K)`.
    fn inv_diag_inv_k(&self, lambda: &[f64]) -> f64 {
        match self {
            Traces::Exact { p, .. } => lambda.iter().enumerate().map(|(j, l)| l * p[(j, j)]).sum(),
            Traces::Probes { alpha, beta, .. } => {
                let s: Vec<f64> = alpha
                    .iter()
                    .zip(beta)
                    .map(|(a, b)| a.iter().zip(b).zip(lambda).map(|((a, b), l)| a * l * b).sum())
                    .collect();
                mean_and_stderr(&s).0
            }
        }
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

/// `Σ_jk A_jk B_jk`.
fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    dot(a.as_slice(), b.as_slice())
}

/// `xᵀ D y`.
fn bilinear(x: &[f64], d: &Matrix, y: &[f64]) -> Result<f64> {
    Ok(dot(x, &d.matvec(y)?))
}

fn evaluate(
    model: &ClusteredModel,
    batch: &Dataset,
    n_total: usize,
    mode: TraceMode,
    want_grad: bool,
) -> Result<ObjectiveGradient> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if batch.dim() != model.kernel().dim() {
        return Err(Error::DimensionMismatch { expected: model.kernel().dim(), found: batch.dim() });
    }
    let kernel = model.kernel();
    let (z, u, lambda) = (model.z(), model.u(), model.lambda());
    let s2 = model.sigma2();
    let m = z.rows();
    let nb = batch.len() as f64;
    let n = n_total.max(1) as f64;

    let k = kernel.gram_sym(z)?;
    let mut a = k.clone();
    a.add_diagonal(lambda);
    let factor = cholesky(&a, &JitterPolicy::none())?.into_result()?;
    audit::record(SystemKind::Shifted);
    let traces = Traces::new(&factor, &k, mode, want_grad)?;

    let v = factor.solve(u);
    let kv = k.matvec(&v)?;
    let log_det_lambda: f64 = lambda.iter().map(|l| libm::log(*l)).sum();
    let (tr_inv_k, tr_stderr) = traces.inv_k(&k, lambda)?;
    let kl = 0.5 * (factor.log_det() - log_det_lambda) - 0.5 * tr_inv_k + 0.5 * dot(&v, &kv);

    // Per-point moments: μ = K_bz v, s_i = k_ii − k_iᵀ A⁻¹ k_i.
    let k_bz = kernel.gram(&batch.x, z)?;
    let a_zb = factor.solve_matrix(&k_bz.transpose());
    let mu = k_bz.matvec(&v)?;
    let resid: Vec<f64> = mu.iter().zip(&batch.y).map(|(m, y)| m - y).collect();
    let mut sum_sq = 0.0;
    for (i, r) in resid.iter().enumerate() {
        let quad: f64 = (0..m).map(|j| k_bz[(i, j)] * a_zb[(j, i)]).sum();
        sum_sq += r * r + (kernel.variance() - quad);
    }
    let c = n / (nb * 2.0 * s2);
    let data_term = 0.5 * n * libm::log(2.0 * core::f64::consts::PI * s2) + c * sum_sq;
    let value = kl + data_term;
    if !value.is_finite() {
        return Err(Error::NonFinite("training objective"));
    }
    if !want_grad {
        return Ok(ObjectiveGradient { value, stderr: 0.5 * tr_stderr, gradient: Vec::new() });
    }

    let w = factor.solve(&kv);
    let q = a_zb.matvec(&resid)?;
    let qq = {
        let mut qq = a_zb.matmul(&a_zb.transpose())?;
        qq.symmetrize();
        qq
    };

    let mut gradient = Vec::with_capacity(kernel.num_params() + 1);
    let dk_zz = kernel.gram_gradients(z, z)?;
    let dk_bz = kernel.gram_gradients(&batch.x, z)?;
    for (t, (dk, dkb)) in dk_zz.iter().zip(&dk_bz).enumerate() {
        let d_kl = 0.5 * traces.inv_d_inv_k(dk)? - bilinear(&v, dk, &w)? + 0.5 * bilinear(&v, dk, &v)?;
        let dkb_v = dkb.matvec(&v)?;
        let d_mu_sum = dot(&resid, &dkb_v) - bilinear(&q, dk, &v)?;
        let d_diag = if t == 0 { kernel.variance() * nb } else { 0.0 };
        let cross: f64 = (0..batch.len()).map(|i| (0..m).map(|j| dkb[(i, j)] * a_zb[(j, i)]).sum::<f64>()).sum();
        let d_s_sum = d_diag - 2.0 * cross + frobenius_inner(dk, &qq);
        gradient.push(d_kl + c * (2.0 * d_mu_sum + d_s_sum));
    }

    // ln σ²: dA = Λ (diagonal), dK = 0.
    let d_kl = 0.5 * traces.inv_diag(lambda) - 0.5 * m as f64 + 0.5 * traces.inv_diag_inv_k(lambda)
        - (0..m).map(|j| lambda[j] * v[j] * w[j]).sum::<f64>();
    let d_mu_sum = -(0..m).map(|j| q[j] * lambda[j] * v[j]).sum::<f64>();
    let d_s_sum: f64 = (0..m).map(|j| lambda[j] * qq[(j, j)]).sum();
    gradient.push(d_kl + 0.5 * n - c * sum_sq + c * (2.0 * d_mu_sum + d_s_sum));

    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("training objective gradient"));
    }
    Ok(ObjectiveGradient { value, stderr: 0.5 * tr_stderr, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, KernelFamily};
    use rand::Rng;

    fn random_problem(seed: u64, family: KernelFamily) -> (ClusteredModel, Dataset) {
        let mut rng = crate::seeded_rng(seed);
        let x = Matrix::from_fn(25, 2, |_, _| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = Matrix::from_fn(6, 2, |_, _| rng.random_range(-2.0..2.0));
        let kernel = Kernel::new(family, 1.2, vec![0.9, 1.4]).unwrap();
        let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let counts: Vec<usize> = (0..6).map(|_| rng.random_range(1..6)).collect();
        let model = ClusteredModel::new(kernel, 0.3, z, u, counts).unwrap();
        (model, Dataset::new(x, y).unwrap())
    }

    fn with_params(model: &ClusteredModel, p: &[f64]) -> ClusteredModel {
        let np = model.kernel().num_params();
        let kernel = model.kernel().with_log_params(&p[..np]).unwrap();
        model.with_hyperparameters(kernel, libm::exp(p[np])).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, family) in [(1, KernelFamily::SquaredExponential), (2, KernelFamily::Matern32), (3, KernelFamily::Matern12)] {
            let (model, data) = random_problem(seed, family);
            let g = objective_and_gradient(&model, &data, 40, TraceMode::Exact).unwrap();
            let mut p = model.kernel().log_params();
            p.push(libm::log(model.sigma2()));
            for t in 0..p.len() {
                let h = 1e-5;
                let mut hi = p.clone();
                hi[t] += h;
                let mut lo = p.clone();
                lo[t] -= h;
                let f = |q: &[f64]| training_objective(&with_params(&model, q), &data, 40, TraceMode::Exact).unwrap().value;
                let fd = (f(&hi) - f(&lo)) / (2.0 * h);
                let rel = (fd - g.gradient[t]).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-6, "{family:?} param {t}: fd {fd} analytic {}", g.gradient[t]);
            }
        }
    }

    #[test]
    fn hutchinson_gradient_is_close_with_many_probes() {
        let (model, data) = random_problem(5, KernelFamily::SquaredExponential);
        let exact = objective_and_gradient(&model, &data, 25, TraceMode::Exact).unwrap();
        let est = objective_and_gradient(&model, &data, 25, TraceMode::Hutchinson { probes: 4000, seed: 1 }).unwrap();
        assert!((est.value - exact.value).abs() < 4.0 * est.stderr.max(1e-12));
        for (a, b) in exact.gradient.iter().zip(&est.gradient) {
            assert!((a - b).abs() < 0.05 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_targets_reduce_to_variance_term() {
        let kernel = Kernel::isotropic(KernelFamily::SquaredExponential, 1.0, 1.0, 1).unwrap();
        let z = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let model = ClusteredModel::new(kernel, 0.5, z, vec![0.0, 0.0], vec![2, 3]).unwrap();
        let x = Matrix::from_rows(&[[-0.5], [0.0], [2.0]]).unwrap();
        let data = Dataset::new(x.clone(), vec![0.0; 3]).unwrap();
        let obj = training_objective(&model, &data, 3, TraceMode::Exact).unwrap().value;
        let kl = super::super::kl_to_prior(&model, TraceMode::Exact).unwrap().value;
        let b = super::super::clustered_posterior(&model, &x).unwrap();
        let var_sum: f64 = b.cov.diagonal().iter().sum();
        let expected = kl + var_sum / (2.0 * 0.5) + 1.5 * libm::log(2.0 * core::f64::consts::PI * 0.5);
        assert!((obj - expected).abs() < 1e-10);
    }
}
