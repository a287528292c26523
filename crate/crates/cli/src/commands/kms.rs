use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use stablegp_core::diagnostics::{kms_cond_bounds, published_kms_cond_bounds};
use stablegp_core::kernels::kms_matrix;
use stablegp_core::linalg::audit::{self, SystemKind};
use stablegp_core::linalg::{cholesky, norm2, spectrum, JitterPolicy};

use crate::config::KmsDemoConfig;
use crate::error::{CliError, Result};
use crate::io::{fmt_f64, write_table, Provenance};
use crate::parallel::par_map;
use crate::stats::{median, quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmsRow {
    pub rho: f64,
    pub n: usize,
    pub cond: f64,
    pub lower: f64,
    pub upper: f64,
    /// Limiting bracket `(1+ρ)²/(1−ρ)²`, above `cond` for every finite `n`.
    pub published_lower: f64,
    /// `NaN` where the published upper bound is undefined.
    pub published_upper: f64,
    pub in_bracket: bool,
    /// Quartiles of `‖v − K⁻¹(Kv)‖₂` over the trials.
    pub err_q1: f64,
    pub err_median: f64,
    pub err_q3: f64,
    pub status: String,
}

pub const KMS_HEADER: [&str; 13] = [
    "rho",
    "n",
    "cond",
    "lower",
    "upper",
    "published_lower",
    "published_upper",
    "in_bracket",
    "err_q1",
    "err_median",
    "err_q3",
    "status",
    "trials",
];

fn kms_row(rho: f64, n: usize, trials: usize, seed: u64) -> Result<KmsRow> {
    let k = kms_matrix(rho, n)?;
    let cond = spectrum(&k)?.cond;
    let bounds = kms_cond_bounds(rho, n)?;
    let published = published_kms_cond_bounds(rho, n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64) ^ rho.to_bits().rotate_left(17));
    let factor = cholesky(&k, &JitterPolicy::none())?;
    audit::record(SystemKind::Bare);
    let (errors, status) = match factor.into_result() {
        Ok(chol) => {
            let errors: Vec<f64> = (0..trials)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                    let kv = k.matvec(&v).expect("square");
                    let back = chol.solve(&kv);
                    let diff: Vec<f64> = v.iter().zip(&back).map(|(a, b)| a - b).collect();
                    norm2(&diff)
                })
                .collect();
            (errors, "ok".to_string())
        }
        Err(e) => (Vec::new(), format!("error: {e}")),
    };
    Ok(KmsRow {
        rho,
        n,
        cond,
        lower: bounds.lower,
        upper: bounds.upper,
        published_lower: published.lower,
        published_upper: published.upper.unwrap_or(f64::NAN),
        in_bracket: bounds.lower <= cond && cond <= bounds.upper,
        err_q1: quantile(&errors, 0.25),
        err_median: median(&errors),
        err_q3: quantile(&errors, 0.75),
        status,
    })
}

/// Rows for every `(ρ, n)`, sorted by that key.
pub fn kms_demo(config: &KmsDemoConfig) -> Result<Vec<KmsRow>> {
    if config.rhos.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(CliError::usage("--rho values must lie in (0, 1)"));
    }
    if config.ns.is_empty() || config.rhos.is_empty() || config.ns.contains(&0) {
        return Err(CliError::usage("--rho and --n must be non-empty and n positive"));
    }
    let mut keys: Vec<(f64, usize)> =
        config.rhos.iter().flat_map(|&r| config.ns.iter().map(move |&n| (r, n))).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).expect("finite keys"));
    par_map(&keys, |&(rho, n)| kms_row(rho, n, config.trials, config.seed)).into_iter().collect()
}

pub fn cmd_kms_demo(config: &KmsDemoConfig) -> Result<Vec<KmsRow>> {
    let rows = kms_demo(config)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.rho),
                r.n.to_string(),
                fmt_f64(r.cond),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                fmt_f64(r.published_lower),
                fmt_f64(r.published_upper),
                r.in_bracket.to_string(),
                fmt_f64(r.err_q1),
                fmt_f64(r.err_median),
                fmt_f64(r.err_q3),
                r.status.clone(),
                config.trials.to_string(),
            ]
        })
        .collect();
    let provenance = Provenance::new("kms-demo", config, config.seed);
    write_table(&config.out, &provenance, config, &KMS_HEADER, &table)?;
    Ok(rows)
}
