use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, norm2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl CgOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }

    /// Relative tolerance `1e-8` with `max_iter = 10·n` (at least 100).
    pub fn default_for(n: usize) -> Self {
        Self { tol: 1e-8, max_iter: (10 * n).max(100) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖b − Ax‖ / ‖b‖` of the recursively updated residual.
    pub residual_norm: f64,
    pub converged: bool,
}

impl CgReport {
    pub fn into_solution(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.solution)
        } else {
            Err(Error::CgNotConverged { iterations: self.iterations, residual: self.residual_norm })
        }
    }
}

/// Unpreconditioned conjugate gradients for a symmetric positive definite operator.
///
/// `matvec(v, out)` must write `A v` into `out`. Hitting `max_iter` is reported
/// through `converged = false`; non-finite iterates are an error.
pub fn conjugate_gradient<F>(
    mut matvec: F,
    b: &[f64],
    opts: &CgOptions,
    x0: Option<&[f64]>,
) -> Result<CgReport>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = match x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::DimensionMismatch { expected: n, found: x0.len() })
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if b_norm == 0.0 {
        return Ok(CgReport { solution: vec![0.0; n], iterations: 0, residual_norm: 0.0, converged: true });
    }

    let mut ap = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        matvec(&x, &mut ap);
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= api;
        }
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = opts.tol * b_norm;
    let mut iterations = 0;

    while libm::sqrt(rr) > target && iterations < opts.max_iter {
        matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::NonFinite("conjugate gradient curvature"));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        if !rr_next.is_finite() || !alpha.is_finite() {
            return Err(Error::NonFinite("conjugate gradient iterate"));
        }
        let beta = rr_next / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
        iterations += 1;
    }

    let residual = libm::sqrt(rr) / b_norm;
    Ok(CgReport { solution: x, iterations, residual_norm: residual, converged: residual <= opts.tol })
}
