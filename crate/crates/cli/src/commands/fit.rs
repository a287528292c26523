use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stablegp_core::diagnostics::{stability_report, StabilityReport};
use stablegp_core::kernels::Kernel;
use stablegp_core::sgp::{fit_clustered, train, ClusteredModel, TrainConfig, TrainStep};

use super::select::InducingFile;
use crate::config::FitConfig;
use crate::error::{CliError, Result};
use crate::io::{fmt_f64, load_csv, read_json, write_json, write_table, Provenance};

/// File written by `fit` and read by `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub provenance: Provenance,
    pub config: FitConfig,
    pub model: ClusteredModel,
    /// Inducing points that received no data and were left out of the model.
    pub dropped: Vec<usize>,
    pub stability: Option<StabilityReport>,
}

/// Accepts either a `fit` output or a bare model.
#[derive(Deserialize)]
#[serde(untagged)]
pub(crate) enum ModelFile {
    Fitted { model: ClusteredModel },
    Bare(ClusteredModel),
}

impl ModelFile {
    pub(crate) fn into_model(self) -> ClusteredModel {
        match self {
            ModelFile::Fitted { model } | ModelFile::Bare(model) => model,
        }
    }
}

/// Broadcasts a single lengthscale to `dim` inputs.
pub(crate) fn kernel_for_dim(kernel: Kernel, dim: usize) -> Result<Kernel> {
    if kernel.dim() == dim {
        Ok(kernel)
    } else if kernel.dim() == 1 {
        Ok(Kernel::isotropic(kernel.family(), kernel.variance(), kernel.lengthscales()[0], dim)?)
    } else {
        Err(CliError::usage(format!("kernel has {} lengthscales but the data has {dim} inputs", kernel.dim())))
    }
}

pub fn log_path(config: &FitConfig) -> PathBuf {
    config.log.clone().unwrap_or_else(|| {
        let mut name = config.out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".log.csv");
        config.out.with_file_name(name)
    })
}

pub fn cmd_fit(config: &FitConfig) -> Result<FitOutput> {
    let data = load_csv(&config.data)?;
    let z = read_json::<InducingFile>(&config.inducing)?.into_set();
    let kernel = kernel_for_dim(read_json(&config.kernel)?, data.dim())?;

    let fit = fit_clustered(&data, &z, &kernel, config.sigma2)?;
    if !fit.dropped.is_empty() {
        eprintln!("warning: dropped {} inducing points with empty clusters", fit.dropped.len());
    }
    let train_config = TrainConfig {
        steps: config.steps,
        batch_size: config.batch,
        step_size: config.step_size,
        probes: config.probes,
        seed: config.seed,
    };
    let outcome = train(&fit.model, &data, &train_config).map_err(|source| match stability_report(&fit.model) {
        Ok(report) => CliError::Numerical { source, report: Box::new(report) },
        Err(_) => CliError::Core(source),
    })?;

    let stability = match stability_report(&outcome.model) {
        Ok(r) => Some(r),
        Err(e) => {
            eprintln!("warning: stability report unavailable: {e}");
            None
        }
    };
    let provenance = Provenance::new("fit", config, config.seed);
    write_log(&log_path(config), &provenance, config, &outcome.log)?;
    let out = FitOutput { provenance, config: config.clone(), model: outcome.model, dropped: fit.dropped, stability };
    write_json(&config.out, &out)?;
    Ok(out)
}

fn write_log(path: &std::path::Path, provenance: &Provenance, config: &FitConfig, log: &[TrainStep]) -> Result<()> {
    let rows: Vec<Vec<String>> = log.iter().map(|s| vec![s.step.to_string(), fmt_f64(s.objective)]).collect();
    write_table(path, provenance, config, &["step", "objective"], &rows)
}
