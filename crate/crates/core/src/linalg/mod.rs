//! Conditioning-aware dense linear algebra.

pub mod audit;
mod cg;
mod cholesky;
mod eigen;
mod hutchinson;
mod matrix;
mod spectrum;
mod wasserstein;

pub use cg::{conjugate_gradient, CgOptions, CgReport};
pub use cholesky::{cholesky, Cholesky, CholeskyOutcome, CholeskyStatus, JitterPolicy};
pub use eigen::{symmetric_eigen, symmetric_eigenvalues, SymmetricEigen};
pub use hutchinson::{hutchinson_trace, rademacher, TraceEstimate};
pub use matrix::{axpy, dist, dot, norm2, sq_dist, Matrix};
pub use spectrum::{
    cholesky_stability_predicate, lanczos_extremes, spectrum, spectrum_with, SpectrumMethod,
    SpectrumSummary, EXACT_EIG_MAX_DIM, LANCZOS_ITERATIONS,
};
pub use wasserstein::{psd_sqrt, wasserstein2_gaussians, SQRT_CLAMP_RELATIVE};
