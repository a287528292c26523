//! Stationary covariance kernels, Gram assembly and structured test matrices.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
    /// Exponential kernel `exp(−r)`.
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    /// Radial profile `κ(r)` with `κ(0) = 1`, `r` the lengthscale-scaled distance.
    pub fn profile(self, r: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => libm::exp(-0.5 * r * r),
            KernelFamily::Matern12 => libm::exp(-r),
            KernelFamily::Matern32 => (1.0 + SQRT_3 * r) * libm::exp(-SQRT_3 * r),
            KernelFamily::Matern52 => {
                (1.0 + SQRT_5 * r + 5.0 * r * r / 3.0) * libm::exp(-SQRT_5 * r)
            }
        }
    }

    /// `κ'(r) / r`, the factor that appears in lengthscale derivatives.
    /// Infinite at `r = 0` only for `Matern12`; callers treat that case separately.
    fn profile_slope_over_r(self, r: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => -libm::exp(-0.5 * r * r),
            KernelFamily::Matern12 => -libm::exp(-r) / r,
            KernelFamily::Matern32 => -3.0 * libm::exp(-SQRT_3 * r),
            KernelFamily::Matern52 => -(5.0 / 3.0) * (1.0 + SQRT_5 * r) * libm::exp(-SQRT_5 * r),
        }
    }

    /// `∫_u^∞ κ(t) dt`.
    fn profile_tail(self, u: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => libm::sqrt(PI / 2.0) * libm::erfc(u / SQRT_2),
            KernelFamily::Matern12 => libm::exp(-u),
            KernelFamily::Matern32 => libm::exp(-SQRT_3 * u) * (2.0 / SQRT_3 + u),
            KernelFamily::Matern52 => {
                libm::exp(-SQRT_5 * u) * (8.0 / (3.0 * SQRT_5) + 5.0 * u / 3.0 + SQRT_5 * u * u / 3.0)
            }
        }
    }
}

/// Stationary ARD kernel `k(x, x') = variance · κ(‖(x − x') / ℓ‖)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct Kernel {
    family: KernelFamily,
    variance: f64,
    lengthscales: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    family: KernelFamily,
    variance: f64,
    lengthscales: Vec<f64>,
}

impl TryFrom<KernelRepr> for Kernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        Kernel::new(r.family, r.variance, r.lengthscales)
    }
}

impl From<Kernel> for KernelRepr {
    fn from(k: Kernel) -> Self {
        KernelRepr { family: k.family, variance: k.variance, lengthscales: k.lengthscales }
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid("variance", format!("must be positive and finite, got {variance}")));
        }
        if lengthscales.is_empty() {
            return Err(Error::invalid("lengthscales", "at least one lengthscale is required"));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lengthscales", format!("must be positive and finite, got {bad}")));
        }
        Ok(Self { family, variance, lengthscales })
    }

    /// Same lengthscale in every one of `dim` input dimensions.
    pub fn isotropic(family: KernelFamily, variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(family, variance, alloc::vec![lengthscale; dim])
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Number of hyperparameters: log-variance followed by one log-lengthscale per dimension.
    pub fn num_params(&self) -> usize {
        1 + self.dim()
    }

    /// Hyperparameters in log space, ordered as in [`Kernel::num_params`].
    pub fn log_params(&self) -> Vec<f64> {
        core::iter::once(libm::log(self.variance))
            .chain(self.lengthscales.iter().map(|l| libm::log(*l)))
            .collect()
    }

    pub fn with_log_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), found: params.len() });
        }
        Kernel::new(self.family, libm::exp(params[0]), params[1..].iter().map(|p| libm::exp(*p)).collect())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: d });
        }
        Ok(())
    }

    #[inline]
    fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let s: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let t = (a - b) / l;
                t * t
            })
            .sum();
        libm::sqrt(s)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.variance * self.family.profile(self.scaled_distance(x, y))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    /// Cross-covariance matrix `K_ab` with entry `(i, j) = k(a_i, b_j)`.
    pub fn gram(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows() > 0 {
            self.check_dim(a.cols())?;
        }
        if b.rows() > 0 {
            self.check_dim(b.cols())?;
        }
        Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| self.eval_unchecked(a.row(i), b.row(j))))
    }

    /// Symmetric `K_aa`, assembled from the upper triangle and mirrored.
    pub fn gram_sym(&self, a: &Matrix) -> Result<Matrix> {
        if a.rows() > 0 {
            self.check_dim(a.cols())?;
        }
        let n = a.rows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.variance;
            for j in (i + 1)..n {
                let v = self.eval_unchecked(a.row(i), a.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// `k(x, x)` for every row of `a`.
    pub fn diag(&self, a: &Matrix) -> Vec<f64> {
        alloc::vec![self.variance; a.rows()]
    }

    /// `∂K_ab / ∂θ` for each log-hyperparameter `θ`, in [`Kernel::log_params`] order.
    pub fn gram_gradients(&self, a: &Matrix, b: &Matrix) -> Result<Vec<Matrix>> {
        if a.rows() > 0 {
            self.check_dim(a.cols())?;
        }
        if b.rows() > 0 {
            self.check_dim(b.cols())?;
        }
        let (n, m, d) = (a.rows(), b.rows(), self.dim());
        let mut grads: Vec<Matrix> = (0..=d).map(|_| Matrix::zeros(n, m)).collect();
        for i in 0..n {
            for j in 0..m {
                let (x, y) = (a.row(i), b.row(j));
                let r = self.scaled_distance(x, y);
                grads[0][(i, j)] = self.variance * self.family.profile(r);
                if r == 0.0 {
                    continue;
                }
                let slope = self.variance * self.family.profile_slope_over_r(r);
                for l in 0..d {
                    let t = (x[l] - y[l]) / self.lengthscales[l];
                    grads[1 + l][(i, j)] = -slope * t * t;
                }
            }
        }
        Ok(grads)
    }

    /// Radial envelope using the largest lengthscale, so it dominates every direction.
    pub fn decay_envelope(&self) -> DecayEnvelope {
        let lengthscale = self.lengthscales.iter().copied().fold(0.0, f64::max);
        DecayEnvelope { family: self.family, variance: self.variance, lengthscale }
    }
}

/// Monotone radial function `ψ` with `|k(x, x')| ≤ ψ(‖x − x'‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscale: f64,
}

impl DecayEnvelope {
    pub fn psi(&self, m: f64) -> f64 {
        self.variance * self.family.profile(m / self.lengthscale)
    }

    /// `∫_a^∞ ψ(r) dr` in closed form.
    pub fn tail_integral(&self, a: f64) -> f64 {
        self.variance * self.lengthscale * self.family.profile_tail(a.max(0.0) / self.lengthscale)
    }
}

/// Kac–Murdock–Szegö matrix with entries `rho^{|i−j|}`.
pub fn kms_matrix(rho: f64, n: usize) -> Result<Matrix> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho", format!("must lie in (0, 1), got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let powers: Vec<f64> = (0..n).map(|k| libm::pow(rho, k as f64)).collect();
    Ok(Matrix::from_fn(n, n, |i, j| powers[i.abs_diff(j)]))
}
