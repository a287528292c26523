use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stablegp_core::covertree::{build, select_kmeans, select_uniform, CoverTreeOptions, InducingSet};
use stablegp_core::kernels::{Kernel, KernelFamily};
use stablegp_core::linalg::{dist, spectrum};
use stablegp_core::sgp::{clustered_marginals, fit_clustered, train, TrainConfig};
use stablegp_core::{Dataset, Matrix};

use super::fit::kernel_for_dim;
use crate::config::{DatasizeSweepConfig, Method};
use crate::error::{CliError, Result};
use crate::io::{fmt_f64, load_csv, read_json, write_table, Provenance};
use crate::parallel::par_map;

const BISECTION_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasizeRow {
    pub n: usize,
    pub m_target: usize,
    pub method: Method,
    /// Inducing points actually used after empty clusters are dropped.
    pub m: usize,
    /// Cover tree resolution chosen to hit `m_target`; `NaN` for other methods.
    pub epsilon: f64,
    pub cond: f64,
    pub rmse: f64,
    pub status: String,
}

pub const DATASIZE_HEADER: [&str; 8] = ["n", "m_target", "method", "M", "epsilon", "cond", "rmse", "status"];

fn max_dist_from_mean(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    x.row_iter().map(|r| dist(r, &mean)).fold(0.0, f64::max)
}

/// Cover tree points at the resolution whose size is closest to `m`, found by
/// bisection on `log ε`. Ties go to the coarser resolution.
pub fn covertree_with_size(x: &Matrix, m: usize, seed: u64) -> Result<(InducingSet, f64)> {
    let options = CoverTreeOptions { seed, ..CoverTreeOptions::default() };
    let spread = max_dist_from_mean(x).max(f64::MIN_POSITIVE);
    let at = |eps: f64| -> Result<InducingSet> {
        let tree = build(x, eps, options)?;
        Ok(tree.inducing_points(tree.depth)?)
    };
    let (mut lo, mut hi) = ((spread * 1e-9).ln(), (spread * 2.0).ln());
    let mut best = (at(hi.exp())?, hi.exp());
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let z = at(mid.exp())?;
        let (gap, best_gap) = (z.len().abs_diff(m), best.0.len().abs_diff(m));
        let coarser = mid.exp() > best.1;
        let count = z.len();
        if gap < best_gap || (gap == best_gap && coarser) {
            best = (z, mid.exp());
        }
        if count == m {
            break;
        }
        if count > m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

fn rmse(y: &[f64], mean: &[f64]) -> f64 {
    let sq: f64 = y.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq / y.len() as f64).sqrt()
}

struct Split {
    train: Dataset,
    test: Dataset,
}

fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((data.len() as f64 * test_fraction).ceil() as usize).clamp(1, data.len() - 1);
    Split { test: data.subset(&idx[..n_test]), train: data.subset(&idx[n_test..]) }
}

fn datasize_row(
    config: &DatasizeSweepConfig,
    kernel: &Kernel,
    train_data: &Dataset,
    test: &Dataset,
    m_target: usize,
    method: Method,
) -> Result<DatasizeRow> {
    let n = train_data.len();
    let (z, epsilon) = match method {
        Method::Covertree => covertree_with_size(&train_data.x, m_target, config.seed)?,
        Method::Uniform => (select_uniform(&train_data.x, m_target.min(n), config.seed)?, f64::NAN),
        Method::Kmeans => (select_kmeans(&train_data.x, m_target.min(n), config.kmeans_iters, config.seed)?, f64::NAN),
    };
    let mut model = fit_clustered(train_data, &z, kernel, config.sigma2)?.model;
    if config.steps > 0 {
        let tc = TrainConfig { steps: config.steps, seed: config.seed, ..TrainConfig::default() };
        model = train(&model, train_data, &tc)?.model;
    }
    let cond = spectrum(&model.shifted_gram()?)?.cond;
    let (mean, _) = clustered_marginals(&model, &test.x)?;
    Ok(DatasizeRow {
        n,
        m_target,
        method,
        m: model.len(),
        epsilon,
        cond,
        rmse: rmse(&test.y, &mean),
        status: "ok".into(),
    })
}

/// Rows for every `(n, M, method)`, sorted by that key. Each `n` uses the
/// first `n` points of one seeded shuffle of the training split, so the
/// subsets are nested.
pub fn datasize_sweep(config: &DatasizeSweepConfig, data: &Dataset) -> Result<Vec<DatasizeRow>> {
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(CliError::usage("--test-fraction must lie in (0, 1)"));
    }
    if data.len() < 2 {
        return Err(CliError::usage("datasize-sweep needs at least two rows"));
    }
    if config.methods.is_empty() || config.m_list.contains(&0) || config.n_list.contains(&0) {
        return Err(CliError::usage("--n-list, --m-list and --method must be non-empty and positive"));
    }
    let Split { train: train_all, test } = split(data, config.test_fraction, config.seed);
    if let Some(&n) = config.n_list.iter().find(|&&n| n > train_all.len()) {
        return Err(CliError::usage(format!("n = {n} exceeds the {} training rows", train_all.len())));
    }
    let kernel = match &config.kernel {
        Some(path) => kernel_for_dim(read_json(path)?, data.dim())?,
        None => Kernel::isotropic(KernelFamily::SquaredExponential, 1.0, 1.0, data.dim())?,
    };

    let mut keys: Vec<(usize, usize, Method)> = Vec::new();
    for &n in &config.n_list {
        for &m in &config.m_list {
            for &method in &config.methods {
                keys.push((n, m, method));
            }
        }
    }
    keys.sort();
    keys.dedup();
    let rows = par_map(&keys, |&(n, m, method)| {
        let subset = train_all.subset(&(0..n).collect::<Vec<_>>());
        datasize_row(config, &kernel, &subset, &test, m, method).unwrap_or_else(|e| DatasizeRow {
            n,
            m_target: m,
            method,
            m: 0,
            epsilon: f64::NAN,
            cond: f64::NAN,
            rmse: f64::NAN,
            status: format!("error: {e}"),
        })
    });
    Ok(rows)
}

pub fn cmd_datasize_sweep(config: &DatasizeSweepConfig) -> Result<Vec<DatasizeRow>> {
    let data = load_csv(&config.data)?;
    let rows = datasize_sweep(config, &data)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.m_target.to_string(),
                r.method.as_str().to_string(),
                r.m.to_string(),
                fmt_f64(r.epsilon),
                fmt_f64(r.cond),
                fmt_f64(r.rmse),
                r.status.clone(),
            ]
        })
        .collect();
    let provenance = Provenance::new("datasize-sweep", config, config.seed);
    write_table(&config.out, &provenance, config, &DATASIZE_HEADER, &table)?;
    Ok(rows)
}
