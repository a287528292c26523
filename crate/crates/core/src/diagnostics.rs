//! Eigenvalue and condition-number bounds for kernel matrices, and a report
//! that compares them with the observed spectrum of a fitted model.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::covertree::separation;
use crate::kernels::DecayEnvelope;
use crate::linalg::audit::{self, SystemKind};
use crate::linalg::{cholesky, cholesky_stability_predicate, norm2, spectrum, JitterPolicy, Matrix, SpectrumSummary};
use crate::sgp::ClusteredModel;
use crate::{Error, Result};

/// Relative size of the neglected series tail at which summation stops.
pub const SERIES_TAIL_RELATIVE: f64 = 1e-10;
const SERIES_MAX_TERMS: usize = 10_000_000;

/// Upper bound on `λmax(K_zz)` for any `δ`-separated `z` in `R^d`:
/// `ψ(0) + 5^d (2/δ)^d Σ_{m≥1} (m − ½)^{d−1} ψ(mδ)`.
///
/// The series is summed until the integral-test bound on the remainder drops
/// below [`SERIES_TAIL_RELATIVE`] times the partial sum; that remainder bound
/// is added to the result so it stays an upper bound.
pub fn lambda_max_bound(psi: &DecayEnvelope, delta: f64, d: usize) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    let head = psi.psi(0.0);
    if delta == f64::INFINITY {
        return Ok(head);
    }
    let p = (d - 1) as i32;
    let term = |u: f64| libm::pow(u - 0.5, p as f64) * psi.psi(u * delta);

    let mut sum = 0.0;
    let mut m = 1usize;
    loop {
        let t = term(m as f64);
        sum += t;
        // The summand is log-concave, hence decreasing once it starts to decrease.
        let decreasing = term(m as f64 + 1.0) <= t;
        if decreasing && (t <= 1e-12 * sum || sum == 0.0) {
            let tail = tail_integral(&term, psi, delta, d, m as f64);
            if tail <= SERIES_TAIL_RELATIVE * sum || sum == 0.0 {
                let scale = libm::pow(5.0, d as f64) * libm::pow(2.0 / delta, d as f64);
                return Ok(head + scale * (sum + tail));
            }
        }
        m += 1;
        if m > SERIES_MAX_TERMS {
            return Err(Error::Divergent(format!(
                "eigenvalue bound series did not converge within {SERIES_MAX_TERMS} terms"
            )));
        }
    }
}

/// `∫_a^∞ (u − ½)^{d−1} ψ(uδ) du` for a decreasing integrand.
fn tail_integral(term: &impl Fn(f64) -> f64, psi: &DecayEnvelope, delta: f64, d: usize, a: f64) -> f64 {
    if d == 1 {
        return psi.tail_integral(a * delta) / delta;
    }
    // Composite Simpson on unit panels until a panel no longer matters.
    let mut total = 0.0;
    let mut lo = a;
    loop {
        const STEPS: usize = 16;
        let h = 1.0 / STEPS as f64;
        let mut s = term(lo) + term(lo + 1.0);
        for i in 1..STEPS {
            s += term(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let panel = s * h / 3.0;
        total += panel;
        if panel <= 1e-6 * total || panel == 0.0 {
            return total;
        }
        lo += 1.0;
    }
}

/// `(C_max + max Λ) / min Λ`, an upper bound on `cond(K_zz + Λ)`.
pub fn cond_bound_with_noise(lambda_max_bound: f64, lambda_diag: &[f64]) -> Result<f64> {
    if lambda_diag.is_empty() {
        return Err(Error::Empty("noise diagonal"));
    }
    if lambda_diag.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::invalid("lambda", "all entries must be positive"));
    }
    let hi = lambda_diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = lambda_diag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((lambda_max_bound + hi) / lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GershgorinBounds {
    pub upper: f64,
    pub lower: f64,
}

/// Eigenvalue enclosure from Gershgorin discs.
pub fn gershgorin_bounds(a: &Matrix) -> GershgorinBounds {
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::INFINITY;
    for i in 0..a.rows() {
        let row = a.row(i);
        let radius: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
        upper = upper.max(row[i] + radius);
        lower = lower.min(row[i] - radius);
    }
    GershgorinBounds { upper, lower }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmsCondBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bracket on `cond(KMS(ρ, n))` from Trench's eigenvalue localization
/// `λ_j = (1 − ρ²)/(1 − 2ρ cos θ_j + ρ²)`, `θ_j ∈ ((j−1)π/(n+1), jπ/(n+1))`.
///
/// As `n → ∞` both ends tend to `(1+ρ)²/(1−ρ)²` from below.
pub fn kms_cond_bounds(rho: f64, n: usize) -> Result<KmsCondBounds> {
    check_kms(rho, n)?;
    let (s_half, s_full) = kms_sines(n);
    let lower = ((1.0 + rho) * (1.0 + rho) - 4.0 * rho * s_full) / ((1.0 - rho) * (1.0 - rho) + 4.0 * rho * s_half);
    let upper = ((1.0 + rho) * (1.0 + rho) - 4.0 * rho * s_half) / ((1.0 - rho) * (1.0 - rho));
    Ok(KmsCondBounds { lower: lower.max(1.0), upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedKmsBounds {
    pub lower: f64,
    /// Absent when `(1 − ρ)² ≤ 2ρε`.
    pub upper: Option<f64>,
}

/// The closed form `(1+ρ)²/(1−ρ)² ≤ cond ≤ ((1+ρ)² + 2ρε)/((1−ρ)² − 2ρε)`,
/// `ε = π²/(n+1)²`, as it is commonly quoted.
///
/// Its left end is the `n → ∞` limit, which the finite-`n` condition number
/// approaches from below, so it is not a valid lower bound; see
/// [`kms_cond_bounds`] for a bracket that is.
pub fn published_kms_cond_bounds(rho: f64, n: usize) -> Result<PublishedKmsBounds> {
    check_kms(rho, n)?;
    let eps = core::f64::consts::PI * core::f64::consts::PI / ((n + 1) as f64 * (n + 1) as f64);
    let lower = (1.0 + rho) * (1.0 + rho) / ((1.0 - rho) * (1.0 - rho));
    let denom = (1.0 - rho) * (1.0 - rho) - 2.0 * rho * eps;
    let upper = (denom > 0.0).then(|| ((1.0 + rho) * (1.0 + rho) + 2.0 * rho * eps) / denom);
    Ok(PublishedKmsBounds { lower, upper })
}

fn check_kms(rho: f64, n: usize) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho", format!("must lie in (0, 1), got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(())
}

/// `(sin²(π/(2(n+1))), sin²(π/(n+1)))`.
fn kms_sines(n: usize) -> (f64, f64) {
    let t = core::f64::consts::PI / (n + 1) as f64;
    let a = libm::sin(0.5 * t);
    let b = libm::sin(t);
    (a * a, b * b)
}

/// Iterations sufficient for CG to reach `‖e‖_A ≤ eps` from initial error
/// `initial_error_norm` (both in the `A`-norm):
/// `log(2‖e₀‖_A/ε) / log(1 + 2/(√κ + 1))`, clamped at zero.
pub fn cg_iteration_bound(cond: f64, initial_error_norm: f64, eps: f64) -> Result<f64> {
    if !(cond >= 1.0) {
        return Err(Error::invalid("cond", format!("must be at least 1, got {cond}")));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    if initial_error_norm < 0.0 {
        return Err(Error::invalid("initial_error_norm", "must be nonnegative"));
    }
    if initial_error_norm == 0.0 {
        return Ok(0.0);
    }
    let rate = libm::log1p(2.0 / (libm::sqrt(cond) + 1.0));
    Ok((libm::log(2.0 * initial_error_norm / eps) / rate).max(0.0))
}

/// Relative residual tolerance assumed by [`stability_report`].
pub const REPORT_CG_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Separation of the model's inducing points (`+inf` for one point).
    #[serde(with = "crate::serde_float")]
    pub separation: f64,
    #[serde(with = "crate::serde_float")]
    pub lambda_max_bound: f64,
    #[serde(with = "crate::serde_float")]
    pub cond_bound: f64,
    /// Spectrum of `K_zz + Λ`.
    pub observed: SpectrumSummary,
    /// Iterations sufficient for CG on `(K_zz + Λ) v = u` to reach relative
    /// residual [`REPORT_CG_TOLERANCE`].
    #[serde(with = "crate::serde_float")]
    pub cg_iteration_bound: f64,
    /// Cholesky success predicate at 23 mantissa bits. `false` whenever
    /// `M ≤ 10`, where the predicate's hypothesis does not hold.
    pub cholesky_ok_single: bool,
    /// As above at 52 mantissa bits.
    pub cholesky_ok_double: bool,
}

/// Bounds for the model's inducing points next to the observed spectrum.
pub fn stability_report(model: &ClusteredModel) -> Result<StabilityReport> {
    let z = model.z();
    let sep = separation(z);
    let envelope = model.kernel().decay_envelope();
    let lambda_max_bound = lambda_max_bound(&envelope, sep, z.cols().max(1))?;
    let cond_bound = cond_bound_with_noise(lambda_max_bound, model.lambda())?;

    let a = model.shifted_gram()?;
    let observed = spectrum(&a)?;
    let factor = cholesky(&a, &JitterPolicy::none())?.into_result()?;
    audit::record(SystemKind::Shifted);
    let u = model.u();
    let x = factor.solve(u);
    let initial = libm::sqrt(crate::linalg::dot(u, &x));
    let eps_a = REPORT_CG_TOLERANCE * norm2(u) / libm::sqrt(observed.lambda_max);
    let cg_bound = if initial == 0.0 { 0.0 } else { cg_iteration_bound(observed.cond.max(1.0), initial, eps_a)? };

    let m = z.rows();
    let predicate = |bits| if m > 10 { cholesky_stability_predicate(observed.cond, m, bits) } else { Ok(false) };
    Ok(StabilityReport {
        separation: sep,
        lambda_max_bound,
        cond_bound,
        observed,
        cg_iteration_bound: cg_bound,
        cholesky_ok_single: predicate(23)?,
        cholesky_ok_double: predicate(52)?,
    })
}
