use alloc::vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub estimate: f64,
    /// Sample standard deviation over probes divided by `√probes`;
    /// `+inf` for a single probe.
    pub stderr: f64,
}

/// Fills `v` with independent ±1 entries.
pub fn rademacher<R: Rng + ?Sized>(rng: &mut R, v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
}

/// Hutchinson's estimator `mean(vᵀ A v)` over seeded Rademacher probes.
pub fn hutchinson_trace<F>(mut matvec: F, n: usize, probes: usize, seed: u64) -> Result<TraceEstimate>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if probes == 0 {
        return Err(Error::invalid("probes", "at least one probe is required"));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    // Welford accumulation of the per-probe quadratic forms.
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..probes {
        rademacher(&mut rng, &mut v);
        matvec(&v, &mut av);
        let q = dot(&v, &av);
        if !q.is_finite() {
            return Err(Error::NonFinite("hutchinson probe"));
        }
        let delta = q - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (q - mean);
    }
    let stderr = if probes > 1 {
        libm::sqrt(m2 / (probes - 1) as f64) / libm::sqrt(probes as f64)
    } else {
        f64::INFINITY
    };
    Ok(TraceEstimate { estimate: mean, stderr })
}
