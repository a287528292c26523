//! Dense symmetric eigensolver: Householder tridiagonalisation followed by
//! implicit QL iterations with Wilkinson-style shifts.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{dot, Matrix};
use crate::{Error, Result};

/// Eigenvalues (ascending) and, optionally, the matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Option<Matrix>,
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    Ok(decompose(a, false)?.values)
}

/// Full eigendecomposition `A = V diag(λ) Vᵀ`.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    decompose(a, true)
}

fn decompose(a: &Matrix, want_vectors: bool) -> Result<SymmetricEigen> {
    a.ensure_symmetric()?;
    if !a.is_finite() {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen { values: Vec::new(), vectors: want_vectors.then(|| Matrix::zeros(0, 0)) });
    }
    let (mut d, mut e, mut q) = tridiagonalize(a, want_vectors);
    tridiagonal_ql(&mut d, &mut e, q.as_mut())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = q.map(|q| Matrix::from_fn(n, n, |r, c| q[(r, order[c])]));
    Ok(SymmetricEigen { values, vectors })
}

/// Reduces `a` to tridiagonal form `Qᵀ A Q = T`.
///
/// Returns the diagonal, the off-diagonal (`e[i]` couples `i` and `i+1`,
/// `e[n-1] = 0`) and, if requested, `Q`.
pub(crate) fn tridiagonalize(a: &Matrix, want_q: bool) -> (Vec<f64>, Vec<f64>, Option<Matrix>) {
    let n = a.rows();
    let mut w = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        d[k] = w[(k, k)];
        let m = n - k - 1;
        let mut v: Vec<f64> = w.row(k)[k + 1..].to_vec();
        let tail_sq: f64 = v[1..].iter().map(|x| x * x).sum();
        if tail_sq == 0.0 {
            e[k] = v[0];
            if want_q {
                reflectors.push((Vec::new(), 0.0));
            }
            continue;
        }
        let norm = libm::sqrt(v[0] * v[0] + tail_sq);
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let beta = 2.0 / dot(&v, &v);
        e[k] = alpha;

        // p = β S v on the trailing block S = w[k+1.., k+1..].
        let p = &mut p[..m];
        for (i, pi) in p.iter_mut().enumerate() {
            *pi = beta * dot(&w.row(k + 1 + i)[k + 1..], &v);
        }
        let kappa = 0.5 * beta * dot(p, &v);
        for (pi, &vi) in p.iter_mut().zip(&v) {
            *pi -= kappa * vi;
        }
        // S ← S − v pᵀ − p vᵀ
        for i in 0..m {
            let (vi, pi) = (v[i], p[i]);
            let row = &mut w.row_mut(k + 1 + i)[k + 1..];
            for ((s, &vj), &pj) in row.iter_mut().zip(&v).zip(p.iter()) {
                *s -= vi * pj + pi * vj;
            }
        }
        if want_q {
            reflectors.push((v, beta));
        }
    }
    if n >= 2 {
        d[n - 2] = w[(n - 2, n - 2)];
        e[n - 2] = w[(n - 2, n - 1)];
    }
    d[n - 1] = w[(n - 1, n - 1)];
    e[n - 1] = 0.0;

    let q = want_q.then(|| {
        // Q = H_0 H_1 ... H_{n-3}, accumulated right-to-left.
        let mut q = Matrix::identity(n);
        for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            let off = k + 1;
            let mut vt_q = vec![0.0; n];
            for (i, &vi) in v.iter().enumerate() {
                for (acc, &qij) in vt_q.iter_mut().zip(q.row(off + i)) {
                    *acc += vi * qij;
                }
            }
            for (i, &vi) in v.iter().enumerate() {
                let row = q.row_mut(off + i);
                for (qij, &c) in row.iter_mut().zip(&vt_q) {
                    *qij -= beta * vi * c;
                }
            }
        }
        q
    });
    (d, e, q)
}

/// Implicit QL on a symmetric tridiagonal matrix. On return `d` holds the
/// eigenvalues (unsorted); if `z` is given its columns are rotated into the
/// corresponding eigenvectors.
pub(crate) fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::Divergent("tridiagonal QL iteration limit".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..z.rows() {
                        let f = z[(k, i + 1)];
                        let zi = z[(k, i)];
                        z[(k, i + 1)] = s * zi + c * f;
                        z[(k, i)] = c * zi - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
