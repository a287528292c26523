//! Gaussian process posteriors: exact, SGPR and the clustered-data
//! inducing-point approximation, with its KL objective and training loop.

mod clustered;
mod exact;
mod objective;
mod train;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

pub use clustered::{
    clustered_marginals, clustered_posterior, clustered_posterior_with, fit_clustered, kl_to_prior,
    ClusteredFit, ClusteredModel, POSTERIOR_CG_TOLERANCE,
};
pub use exact::{exact_posterior, sample_prior, sgpr_elbo, sgpr_posterior, ExactGP, PRIOR_SAMPLE_JITTER};
pub use objective::{objective_and_gradient, training_objective, ObjectiveGradient};
pub use train::{train, TrainConfig, TrainOutcome, TrainStep};

/// Mean and covariance of a posterior at a finite set of query points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub query_points: Matrix,
    /// Diagonal jitter the solver had to add (`0` when none was needed).
    pub jitter_used: f64,
}

impl GaussianBelief {
    pub fn marginal_std(&self) -> Vec<f64> {
        self.cov.diagonal().into_iter().map(|v| libm::sqrt(v.max(0.0))).collect()
    }
}

/// How trace terms `tr(·)` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Dense computation from a Cholesky factor.
    Exact,
    /// Hutchinson's estimator with Rademacher probes.
    Hutchinson { probes: usize, seed: u64 },
}

/// A value together with its Monte Carlo standard error (`0` when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}
