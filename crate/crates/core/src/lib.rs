//! Numerically stable sparse Gaussian process regression.
//!
//! The crate is `no_std` (with `alloc`) and contains the algorithmic core:
//!
//! - [`kernels`]: stationary covariance functions, Gram assembly, KMS matrices
//!   and radial decay envelopes.
//! - [`linalg`]: dense linear algebra that reports on conditioning: Cholesky
//!   with jitter escalation, conjugate gradients, spectra, Hutchinson trace
//!   estimation and the Gaussian 2-Wasserstein distance.
//! - [`covertree`]: breadth-first cover-tree construction of separated
//!   inducing points, separation/resolution metrics and baseline selectors.
//! - [`sgp`]: exact, SGPR and clustered-data posteriors, the KL objective and
//!   the stochastic training loop.
//! - [`diagnostics`]: eigenvalue and condition-number bound calculators.
//!
//! Enable the `std` feature for thread-local solve instrumentation and
//! `std::error::Error` impls.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod covertree;
pub mod dataset;
pub mod diagnostics;
mod error;
pub mod kernels;
pub mod linalg;
pub mod serde_float;
pub mod sgp;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use linalg::Matrix;

pub(crate) fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
