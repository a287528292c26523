use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::GaussianBelief;
use crate::covertree::InducingSet;
use crate::kernels::Kernel;
use crate::linalg::audit::{self, SystemKind};
use crate::linalg::{cholesky, dot, JitterPolicy, Matrix};
use crate::{Error, Result};

/// GP regression with homoskedastic Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactGP {
    pub kernel: Kernel,
    pub noise_sigma2: f64,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl ExactGP {
    pub fn new(kernel: Kernel, noise_sigma2: f64, x: Matrix, y: Vec<f64>) -> Result<Self> {
        if !(noise_sigma2 > 0.0) || !noise_sigma2.is_finite() {
            return Err(Error::invalid("noise_sigma2", format!("must be positive, got {noise_sigma2}")));
        }
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.rows(), found: y.len() });
        }
        if x.rows() > 0 && x.cols() != kernel.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), found: x.cols() });
        }
        Ok(Self { kernel, noise_sigma2, x, y })
    }
}

fn check_query(kernel: &Kernel, query: &Matrix) -> Result<()> {
    if query.rows() > 0 && query.cols() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), found: query.cols() });
    }
    Ok(())
}

/// `mean = K_*x (K_xx + σ²I)⁻¹ y`, `cov = K_** − K_*x (K_xx + σ²I)⁻¹ K_x*`.
pub fn exact_posterior(model: &ExactGP, query: &Matrix) -> Result<GaussianBelief> {
    check_query(&model.kernel, query)?;
    let k_qq = model.kernel.gram_sym(query)?;
    if model.x.rows() == 0 {
        let mean = vec![0.0; query.rows()];
        return Ok(GaussianBelief { mean, cov: k_qq, query_points: query.clone(), jitter_used: 0.0 });
    }
    let mut a = model.kernel.gram_sym(&model.x)?;
    a.add_to_diagonal(model.noise_sigma2);
    let factor = cholesky(&a, &JitterPolicy::relative_to(&a))?.into_result()?;
    audit::record(SystemKind::Shifted);

    let k_xq = model.kernel.gram(&model.x, query)?;
    let alpha = factor.solve(&model.y);
    let mean = k_xq.tr_matmul(&Matrix::column(&alpha))?.into_vec();
    let v = factor.solve_lower_matrix(&k_xq);
    let mut cov = k_qq.sub(&v.tr_matmul(&v)?)?;
    cov.symmetrize();
    Ok(GaussianBelief { mean, cov, query_points: query.clone(), jitter_used: factor.jitter() })
}

struct SgprParts {
    l_zz: crate::linalg::Cholesky,
    l_b: crate::linalg::Cholesky,
    /// `L_B⁻¹ A y / σ`.
    c: Vec<f64>,
    /// `A = L⁻¹ K_zx / σ`.
    a: Matrix,
}

fn sgpr_parts(model: &ExactGP, z: &InducingSet) -> Result<SgprParts> {
    if z.is_empty() {
        return Err(Error::Empty("inducing set"));
    }
    check_query(&model.kernel, &z.points)?;
    let sigma = libm::sqrt(model.noise_sigma2);
    let k_zz = model.kernel.gram_sym(&z.points)?;
    let l_zz = cholesky(&k_zz, &JitterPolicy::relative_to(&k_zz))?.into_result()?;
    audit::record(SystemKind::Bare);
    let k_zx = model.kernel.gram(&z.points, &model.x)?;
    let a = l_zz.solve_lower_matrix(&k_zx).scaled(1.0 / sigma);
    let mut b = a.matmul(&a.transpose())?;
    b.symmetrize();
    b.add_to_diagonal(1.0);
    let l_b = cholesky(&b, &JitterPolicy::none())?.into_result()?;
    audit::record(SystemKind::Shifted);
    let ay = a.matvec(&model.y)?;
    let c = l_b.solve_lower(&ay.iter().map(|v| v / sigma).collect::<Vec<_>>());
    Ok(SgprParts { l_zz, l_b, c, a })
}

/// Collapsed variational (Titsias) predictive with the optimal `q(u)`.
///
/// `K_zz` is factorized with the default jitter policy; a failure after
/// escalation is returned as [`Error::CholeskyFailed`].
pub fn sgpr_posterior(model: &ExactGP, z: &InducingSet, query: &Matrix) -> Result<GaussianBelief> {
    check_query(&model.kernel, query)?;
    let parts = sgpr_parts(model, z)?;
    let k_zq = model.kernel.gram(&z.points, query)?;
    let t1 = parts.l_zz.solve_lower_matrix(&k_zq);
    let t2 = parts.l_b.solve_lower_matrix(&t1);
    let mean = t2.tr_matmul(&Matrix::column(&parts.c))?.into_vec();
    let mut cov = model.kernel.gram_sym(query)?.sub(&t1.tr_matmul(&t1)?)?.add(&t2.tr_matmul(&t2)?)?;
    cov.symmetrize();
    Ok(GaussianBelief { mean, cov, query_points: query.clone(), jitter_used: parts.l_zz.jitter() })
}

/// Collapsed evidence lower bound on `log p(y)` for the SGPR approximation.
pub fn sgpr_elbo(model: &ExactGP, z: &InducingSet) -> Result<f64> {
    let parts = sgpr_parts(model, z)?;
    let n = model.y.len() as f64;
    let s2 = model.noise_sigma2;
    let trace_kxx = model.kernel.variance() * n;
    let trace_aat: f64 = parts.a.as_slice().iter().map(|v| v * v).sum();
    Ok(-0.5 * n * libm::log(2.0 * core::f64::consts::PI * s2) - 0.5 * parts.l_b.log_det()
        - 0.5 * dot(&model.y, &model.y) / s2
        + 0.5 * dot(&parts.c, &parts.c)
        - 0.5 * trace_kxx / s2
        + 0.5 * trace_aat)
}

/// Diagonal added to `K_xx` before factorizing for prior draws.
pub const PRIOR_SAMPLE_JITTER: f64 = 1e-10;
const PRIOR_SAMPLE_MAX_POINTS: usize = 5000;

/// One draw from `N(0, K_xx + 10⁻¹⁰ I)`. If that factorization fails the
/// default jitter escalation takes over.
pub fn sample_prior(kernel: &Kernel, x: &Matrix, seed: u64) -> Result<Vec<f64>> {
    if x.rows() > PRIOR_SAMPLE_MAX_POINTS {
        return Err(Error::invalid("x", format!("at most {PRIOR_SAMPLE_MAX_POINTS} points, got {}", x.rows())));
    }
    let mut k = kernel.gram_sym(x)?;
    k.add_to_diagonal(PRIOR_SAMPLE_JITTER);
    let factor = cholesky(&k, &JitterPolicy::relative_to(&k))?.into_result()?;
    audit::record(SystemKind::Bare);
    let mut rng = crate::seeded_rng(seed);
    let w: Vec<f64> = (0..x.rows()).map(|_| StandardNormal.sample(&mut rng)).collect();
    factor.l().matvec(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covertree::Provenance;
    use crate::kernels::KernelFamily;
    use crate::linalg::symmetric_eigenvalues;
    use rand::Rng;

    fn se(ls: f64) -> Kernel {
        Kernel::isotropic(KernelFamily::SquaredExponential, 1.0, ls, 1).unwrap()
    }

    fn line(v: &[f64]) -> Matrix {
        Matrix::from_fn(v.len(), 1, |i, _| v[i])
    }

    #[test]
    fn no_data_gives_prior() {
        let m = ExactGP::new(se(1.0), 0.1, Matrix::zeros(0, 1), vec![]).unwrap();
        let q = line(&[0.0, 0.5]);
        let b = exact_posterior(&m, &q).unwrap();
        assert_eq!(b.mean, vec![0.0, 0.0]);
        assert_eq!(b.cov, se(1.0).gram_sym(&q).unwrap());
    }

    #[test]
    fn interpolates_with_small_noise() {
        let x = line(&[-1.0, 0.0, 1.5]);
        let s2: f64 = 1e-6;
        let m = ExactGP::new(se(1.0), s2, x.clone(), vec![0.3, -0.7, 1.1]).unwrap();
        let b = exact_posterior(&m, &x).unwrap();
        for (mu, y) in b.mean.iter().zip(&m.y) {
            assert!((mu - y).abs() < 10.0 * libm::sqrt(s2));
        }
    }

    #[test]
    fn sgpr_single_inducing_point_shrinks_prior() {
        let mut rng = crate::seeded_rng(4);
        let x = Matrix::from_fn(20, 1, |_, _| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = ExactGP::new(se(0.8), 0.2, x, y).unwrap();
        let z = InducingSet::new(line(&[0.1]), Provenance::Given);
        let q = line(&[-1.0, 0.0, 0.7, 2.0]);
        let b = sgpr_posterior(&m, &z, &q).unwrap();
        let diff = m.kernel.gram_sym(&q).unwrap().sub(&b.cov).unwrap();
        let ev = symmetric_eigenvalues(&diff).unwrap();
        assert!(ev[0] >= -1e-12);
        // Rank-one correction: only one non-negligible eigenvalue.
        assert!(ev[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn elbo_bounds_marginal_likelihood() {
        let mut rng = crate::seeded_rng(6);
        let x = Matrix::from_fn(30, 1, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = ExactGP::new(se(1.0), 0.3, x.clone(), y.clone()).unwrap();
        let mut a = m.kernel.gram_sym(&x).unwrap();
        a.add_to_diagonal(0.3);
        let f = cholesky(&a, &JitterPolicy::none()).unwrap().into_result().unwrap();
        let alpha = f.solve(&y);
        let lml = -0.5 * dot(&y, &alpha) - 0.5 * f.log_det() - 15.0 * libm::log(2.0 * core::f64::consts::PI);
        let z = InducingSet::new(line(&[-2.0, 0.0, 2.0]), Provenance::Given);
        assert!(sgpr_elbo(&m, &z).unwrap() <= lml + 1e-10);

        // Inducing points at every input recover the marginal likelihood.
        let grid = line(&(0..12).map(|i| -4.4 + 0.8 * i as f64).collect::<Vec<_>>());
        let yg: Vec<f64> = (0..12).map(|i| libm::sin(i as f64)).collect();
        let m = ExactGP::new(se(0.6), 0.3, grid.clone(), yg.clone()).unwrap();
        let mut a = m.kernel.gram_sym(&grid).unwrap();
        a.add_to_diagonal(0.3);
        let f = cholesky(&a, &JitterPolicy::none()).unwrap().into_result().unwrap();
        let lml = -0.5 * dot(&yg, &f.solve(&yg)) - 0.5 * f.log_det() - 6.0 * libm::log(2.0 * core::f64::consts::PI);
        let full = InducingSet::new(grid, Provenance::Given);
        assert!((sgpr_elbo(&m, &full).unwrap() - lml).abs() < 1e-8);
    }

    #[test]
    fn prior_samples_are_seeded() {
        let x = line(&[0.0, 0.3, 1.0]);
        assert_eq!(sample_prior(&se(1.0), &x, 5).unwrap(), sample_prior(&se(1.0), &x, 5).unwrap());
        assert_ne!(sample_prior(&se(1.0), &x, 5).unwrap(), sample_prior(&se(1.0), &x, 6).unwrap());
    }

    #[test]
    fn bad_models_rejected() {
        assert!(ExactGP::new(se(1.0), 0.0, line(&[0.0]), vec![1.0]).is_err());
        assert!(ExactGP::new(se(1.0), 1.0, line(&[0.0]), vec![]).is_err());
        assert!(ExactGP::new(se(1.0), 1.0, Matrix::zeros(1, 2), vec![0.0]).is_err());
    }
}
