use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use stablegp_core::covertree::{build, spatial_resolution, CoverTreeOptions};
use stablegp_core::diagnostics::{stability_report, REPORT_CG_TOLERANCE};
use stablegp_core::kernels::Kernel;
use stablegp_core::linalg::audit::{self, SystemKind};
use stablegp_core::linalg::{conjugate_gradient, wasserstein2_gaussians, CgOptions};
use stablegp_core::sgp::{clustered_posterior, exact_posterior, fit_clustered, sample_prior, ExactGP, GaussianBelief};
use stablegp_core::{Dataset, Matrix};

use crate::config::SweepResolutionConfig;
use crate::error::{CliError, Result};
use crate::io::{fmt_f64, seed_list, write_table, Provenance};
use crate::parallel::par_map;
use crate::stats::halton;

/// Inputs are drawn uniformly from `[-HALF_WIDTH, HALF_WIDTH]^d`.
pub const HALF_WIDTH: f64 = 5.0;
/// Size of the low-discrepancy grid the posteriors are compared on.
pub const QUERY_GRID_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow {
    pub d: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub m: usize,
    pub separation: f64,
    pub resolution: f64,
    /// Wasserstein-2 distance to the exact posterior on the query grid.
    pub w2: f64,
    /// Observed `cond(K_zz + Λ)`.
    pub cond: f64,
    /// `max diag / min diag` of `K_zz + Λ`, a lower bound on `cond`.
    pub cond_lower: f64,
    pub cond_bound: f64,
    pub cg_iterations: usize,
    pub cg_bound: f64,
    pub status: String,
}

impl ResolutionRow {
    fn failed(d: usize, epsilon: f64, seed: u64, status: String) -> Self {
        ResolutionRow {
            d,
            epsilon,
            seed,
            m: 0,
            separation: f64::NAN,
            resolution: f64::NAN,
            w2: f64::NAN,
            cond: f64::NAN,
            cond_lower: f64::NAN,
            cond_bound: f64::NAN,
            cg_iterations: 0,
            cg_bound: f64::NAN,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const RESOLUTION_HEADER: [&str; 13] = [
    "d",
    "epsilon",
    "seed",
    "M",
    "separation",
    "resolution",
    "w2",
    "cond",
    "cond_lower",
    "cond_bound",
    "cg_iterations",
    "cg_bound",
    "status",
];

fn group_seed(seed: u64, d: usize) -> u64 {
    seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The sweep's kernel in dimension `d`: unit variance, lengthscale `0.5·√d`.
pub fn sweep_kernel(config: &SweepResolutionConfig, d: usize) -> Result<Kernel> {
    Ok(Kernel::isotropic(config.family.into(), 1.0, 0.5 * (d as f64).sqrt(), d)?)
}

/// Uniform inputs on the hypercube with targets drawn from the prior plus noise.
pub fn synthetic_dataset(kernel: &Kernel, n: usize, sigma2: f64, seed: u64) -> Result<Dataset> {
    let d = kernel.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-HALF_WIDTH..HALF_WIDTH)).collect();
    let x = Matrix::from_row_major(n, d, xs)?;
    let f = sample_prior(kernel, &x, rng.random())?;
    let noise = sigma2.sqrt();
    let y = f.iter().map(|v| v + noise * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(Dataset::new(x, y)?)
}

pub fn query_grid(d: usize) -> Result<Matrix> {
    Ok(Matrix::from_row_major(QUERY_GRID_SIZE, d, halton(QUERY_GRID_SIZE, d, -HALF_WIDTH, HALF_WIDTH))?)
}

fn resolution_row(
    data: &Dataset,
    kernel: &Kernel,
    sigma2: f64,
    grid: &Matrix,
    exact: &GaussianBelief,
    epsilon: f64,
    seed: u64,
) -> Result<ResolutionRow> {
    let tree = build(&data.x, epsilon, CoverTreeOptions { seed, ..CoverTreeOptions::default() })?;
    let z = tree.inducing_points(tree.depth)?;
    let resolution = spatial_resolution(&data.x, &z.points);
    let model = fit_clustered(data, &z, kernel, sigma2)?.model;
    let approx = clustered_posterior(&model, grid)?;
    let w2 = wasserstein2_gaussians(&exact.mean, &exact.cov, &approx.mean, &approx.cov)?;
    let report = stability_report(&model)?;

    let a = model.shifted_gram()?;
    let diag = a.diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cg = conjugate_gradient(
        |v, out| a.matvec_into(v, out),
        model.u(),
        &CgOptions::new(REPORT_CG_TOLERANCE, 100 * model.len().max(10)),
        None,
    )?;
    audit::record(SystemKind::Shifted);

    Ok(ResolutionRow {
        d: data.dim(),
        epsilon,
        seed,
        m: model.len(),
        separation: report.separation,
        resolution,
        w2,
        cond: report.observed.cond,
        cond_lower: hi / lo,
        cond_bound: report.cond_bound,
        cg_iterations: cg.iterations,
        cg_bound: report.cg_iteration_bound,
        status: if cg.converged { "ok".into() } else { "cg_not_converged".into() },
    })
}

fn resolution_group(config: &SweepResolutionConfig, d: usize, seed: u64) -> Vec<ResolutionRow> {
    let setup = || -> Result<_> {
        let kernel = sweep_kernel(config, d)?;
        let data = synthetic_dataset(&kernel, config.n, config.sigma2, group_seed(seed, d))?;
        let grid = query_grid(d)?;
        let exact = exact_posterior(&ExactGP::new(kernel.clone(), config.sigma2, data.x.clone(), data.y.clone())?, &grid)?;
        Ok((kernel, data, grid, exact))
    };
    match setup() {
        Ok((kernel, data, grid, exact)) => config
            .epsilons
            .iter()
            .map(|&eps| {
                resolution_row(&data, &kernel, config.sigma2, &grid, &exact, eps, seed)
                    .unwrap_or_else(|e| ResolutionRow::failed(d, eps, seed, format!("error: {e}")))
            })
            .collect(),
        Err(e) => {
            config.epsilons.iter().map(|&eps| ResolutionRow::failed(d, eps, seed, format!("error: {e}"))).collect()
        }
    }
}

fn validate(config: &SweepResolutionConfig) -> Result<()> {
    if config.dims.is_empty() || config.dims.iter().any(|&d| d == 0 || d > 16) {
        return Err(CliError::usage("--d values must lie in 1..=16"));
    }
    if config.epsilons.is_empty() || config.epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(CliError::usage("--epsilons must be positive and finite"));
    }
    if config.seeds.is_empty() {
        return Err(CliError::usage("--seeds must not be empty"));
    }
    if config.n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    if !(config.sigma2 > 0.0) {
        return Err(CliError::usage("--sigma2 must be positive"));
    }
    Ok(())
}

/// Rows for every `(d, ε, seed)`, sorted by that key.
pub fn sweep_resolution(config: &SweepResolutionConfig) -> Result<Vec<ResolutionRow>> {
    validate(config)?;
    let groups: Vec<(usize, u64)> =
        config.dims.iter().flat_map(|&d| config.seeds.iter().map(move |&s| (d, s))).collect();
    let mut rows: Vec<ResolutionRow> =
        par_map(&groups, |&(d, seed)| resolution_group(config, d, seed)).into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.d, a.epsilon, a.seed).partial_cmp(&(b.d, b.epsilon, b.seed)).expect("finite keys"));
    Ok(rows)
}

pub fn cmd_sweep_resolution(config: &SweepResolutionConfig) -> Result<Vec<ResolutionRow>> {
    let rows = sweep_resolution(config)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                fmt_f64(r.epsilon),
                r.seed.to_string(),
                r.m.to_string(),
                fmt_f64(r.separation),
                fmt_f64(r.resolution),
                fmt_f64(r.w2),
                fmt_f64(r.cond),
                fmt_f64(r.cond_lower),
                fmt_f64(r.cond_bound),
                r.cg_iterations.to_string(),
                fmt_f64(r.cg_bound),
                r.status.clone(),
            ]
        })
        .collect();
    let provenance = Provenance::new("sweep-resolution", config, seed_list(&config.seeds));
    write_table(&config.out, &provenance, config, &RESOLUTION_HEADER, &table)?;
    Ok(rows)
}
