use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Estimate, GaussianBelief, TraceMode};
use crate::covertree::{cluster_assign, InducingSet};
use crate::kernels::Kernel;
use crate::linalg::audit::{self, SystemKind};
use crate::linalg::{cholesky, conjugate_gradient, dot, hutchinson_trace, CgOptions, JitterPolicy, Matrix};
use crate::{Dataset, Error, Result};

/// Relative residual used by the CG solves in [`clustered_posterior`].
pub const POSTERIOR_CG_TOLERANCE: f64 = 1e-12;

/// Inducing-point approximation in which each inducing point carries the mean
/// `u_j` of the targets clustered to it, observed with variance `Λ_jj`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ClusteredModel {
    kernel: Kernel,
    sigma2: f64,
    z: Matrix,
    u: Vec<f64>,
    lambda: Vec<f64>,
    counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    kernel: Kernel,
    sigma2: f64,
    z: Matrix,
    u: Vec<f64>,
    lambda: Vec<f64>,
    counts: Vec<usize>,
}

impl TryFrom<ModelRepr> for ClusteredModel {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        ClusteredModel::from_parts(r.kernel, r.sigma2, r.z, r.u, r.lambda, r.counts)
    }
}

impl From<ClusteredModel> for ModelRepr {
    fn from(m: ClusteredModel) -> Self {
        ModelRepr { kernel: m.kernel, sigma2: m.sigma2, z: m.z, u: m.u, lambda: m.lambda, counts: m.counts }
    }
}

impl ClusteredModel {
    /// Model with `Λ_jj = σ² / counts_j`.
    pub fn new(kernel: Kernel, sigma2: f64, z: Matrix, u: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let lambda = counts.iter().map(|&c| sigma2 / c as f64).collect();
        Self::from_parts(kernel, sigma2, z, u, lambda, counts)
    }

    pub fn from_parts(
        kernel: Kernel,
        sigma2: f64,
        z: Matrix,
        u: Vec<f64>,
        lambda: Vec<f64>,
        counts: Vec<usize>,
    ) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid("sigma2", format!("must be positive, got {sigma2}")));
        }
        let m = z.rows();
        if m == 0 {
            return Err(Error::Empty("inducing points"));
        }
        if z.cols() != kernel.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), found: z.cols() });
        }
        for len in [u.len(), lambda.len(), counts.len()] {
            if len != m {
                return Err(Error::DimensionMismatch { expected: m, found: len });
            }
        }
        if lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lambda", "all entries must be positive and finite"));
        }
        if counts.contains(&0) {
            return Err(Error::invalid("counts", "every cluster must be nonempty"));
        }
        if !z.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clustered model"));
        }
        Ok(Self { kernel, sigma2, z, u, lambda, counts })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.rows() == 0
    }

    /// Same clusters with new hyperparameters; `Λ` is re-derived from the counts.
    pub fn with_hyperparameters(&self, kernel: Kernel, sigma2: f64) -> Result<Self> {
        Self::new(kernel, sigma2, self.z.clone(), self.u.clone(), self.counts.clone())
    }

    /// `K_zz + Λ`.
    pub fn shifted_gram(&self) -> Result<Matrix> {
        let mut a = self.kernel.gram_sym(&self.z)?;
        a.add_diagonal(&self.lambda);
        Ok(a)
    }
}

/// Output of [`fit_clustered`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredFit {
    pub model: ClusteredModel,
    /// Cluster of each datum, indexing the model's (post-drop) inducing points.
    pub labels: Vec<usize>,
    /// Indices into the input inducing set that received no data and were dropped.
    pub dropped: Vec<usize>,
}

/// Clusters `data` to the nearest inducing point and sets `u_j` to the mean
/// target of cluster `j` and `Λ_jj = σ²/N_j`. Empty clusters are dropped.
pub fn fit_clustered(data: &Dataset, z: &InducingSet, kernel: &Kernel, sigma2: f64) -> Result<ClusteredFit> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if z.is_empty() {
        return Err(Error::Empty("inducing set"));
    }
    if z.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: z.dim() });
    }
    let assignment = cluster_assign(&data.x, &z.points);
    let mut sums = vec![0.0; z.len()];
    for (&l, &y) in assignment.labels.iter().zip(&data.y) {
        sums[l] += y;
    }
    let mut remap = vec![usize::MAX; z.len()];
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (j, &c) in assignment.counts.iter().enumerate() {
        if c == 0 {
            dropped.push(j);
        } else {
            remap[j] = kept.len();
            kept.push(j);
        }
    }
    let u = kept.iter().map(|&j| sums[j] / assignment.counts[j] as f64).collect();
    let counts = kept.iter().map(|&j| assignment.counts[j]).collect();
    let model = ClusteredModel::new(kernel.clone(), sigma2, z.points.select_rows(&kept), u, counts)?;
    let labels = assignment.labels.iter().map(|&l| remap[l]).collect();
    Ok(ClusteredFit { model, labels, dropped })
}

fn cg_options(m: usize) -> CgOptions {
    CgOptions::new(POSTERIOR_CG_TOLERANCE, (10 * m).max(100))
}

fn shifted_solve(a: &Matrix, b: &[f64], opts: &CgOptions) -> Result<Vec<f64>> {
    let report = conjugate_gradient(|v, out| a.matvec_into(v, out), b, opts, None)?;
    audit::record(SystemKind::Shifted);
    report.into_solution()
}

fn check_query(model: &ClusteredModel, query: &Matrix) -> Result<()> {
    if query.rows() > 0 && query.cols() != model.kernel.dim() {
        return Err(Error::DimensionMismatch { expected: model.kernel.dim(), found: query.cols() });
    }
    Ok(())
}

/// Posterior moments with solves against `K_zz + Λ` by unpreconditioned CG
/// at [`POSTERIOR_CG_TOLERANCE`]; no jitter is added.
pub fn clustered_posterior(model: &ClusteredModel, query: &Matrix) -> Result<GaussianBelief> {
    clustered_posterior_with(model, query, &cg_options(model.len()))
}

pub fn clustered_posterior_with(model: &ClusteredModel, query: &Matrix, opts: &CgOptions) -> Result<GaussianBelief> {
    check_query(model, query)?;
    let a = model.shifted_gram()?;
    let k_zq = model.kernel.gram(&model.z, query)?;
    let v = shifted_solve(&a, &model.u, opts)?;
    let mean = k_zq.tr_matmul(&Matrix::column(&v))?.into_vec();
    let mut w = Matrix::zeros(model.len(), query.rows());
    for j in 0..query.rows() {
        let col = shifted_solve(&a, &k_zq.col(j), opts)?;
        for (i, c) in col.into_iter().enumerate() {
            w[(i, j)] = c;
        }
    }
    let mut cov = model.kernel.gram_sym(query)?.sub(&k_zq.tr_matmul(&w)?)?;
    cov.symmetrize();
    Ok(GaussianBelief { mean, cov, query_points: query.clone(), jitter_used: 0.0 })
}

/// Posterior means and marginal variances, one CG solve per query point.
pub fn clustered_marginals(model: &ClusteredModel, query: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    check_query(model, query)?;
    let opts = cg_options(model.len());
    let a = model.shifted_gram()?;
    let v = shifted_solve(&a, &model.u, &opts)?;
    let mut mean = Vec::with_capacity(query.rows());
    let mut var = Vec::with_capacity(query.rows());
    for q in query.row_iter() {
        let k: Vec<f64> = model.z.row_iter().map(|z| model.kernel.eval_unchecked(z, q)).collect();
        mean.push(dot(&k, &v));
        let w = shifted_solve(&a, &k, &opts)?;
        var.push(model.kernel.variance() - dot(&k, &w));
    }
    Ok((mean, var))
}

/// `KL(q(f(z)) ‖ p(f(z)))` for the clustered posterior:
/// `½ ln(|K+Λ|/|Λ|) − ½ tr((K+Λ)⁻¹K) + ½ vᵀKv`, `v = (K+Λ)⁻¹u`.
pub fn kl_to_prior(model: &ClusteredModel, mode: TraceMode) -> Result<Estimate> {
    let k = model.kernel.gram_sym(&model.z)?;
    let mut a = k.clone();
    a.add_diagonal(&model.lambda);
    let factor = cholesky(&a, &JitterPolicy::none())?.into_result()?;
    audit::record(SystemKind::Shifted);
    let log_det_lambda: f64 = model.lambda.iter().map(|l| libm::log(*l)).sum();
    let v = factor.solve(&model.u);
    let kv = k.matvec(&v)?;
    let m = model.len();

    let trace = match mode {
        TraceMode::Exact => {
            // tr((K+Λ)⁻¹K) = M − Σ_j Λ_jj [(K+Λ)⁻¹]_jj
            let inv = factor.inverse();
            let t = m as f64 - model.lambda.iter().enumerate().map(|(j, l)| l * inv[(j, j)]).sum::<f64>();
            Estimate { value: t, stderr: 0.0 }
        }
        TraceMode::Hutchinson { probes, seed } => {
            let opts = cg_options(m);
            let mut failure = None;
            let est = hutchinson_trace(
                |w, out| {
                    let kw = k.matvec(w).expect("square kernel matrix");
                    match shifted_solve(&a, &kw, &opts) {
                        Ok(x) => out.copy_from_slice(&x),
                        Err(e) => {
                            failure.get_or_insert(e);
                            out.iter_mut().for_each(|o| *o = f64::NAN);
                        }
                    }
                },
                m,
                probes,
                seed,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            Estimate { value: est.estimate, stderr: est.stderr }
        }
    };
    let value = 0.5 * (factor.log_det() - log_det_lambda) - 0.5 * trace.value + 0.5 * dot(&v, &kv);
    Ok(Estimate { value, stderr: 0.5 * trace.stderr })
}
