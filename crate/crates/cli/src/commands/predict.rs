use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stablegp_core::sgp::clustered_marginals;

use super::fit::ModelFile;
use crate::config::PredictConfig;
use crate::error::{CliError, Result};
use crate::io::{fmt_f64, load_table, read_json, write_json, write_table, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub rmse: f64,
    /// Mean negative log predictive density of the targets, noise included.
    pub nlpd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub metrics: Option<PredictionMetrics>,
}

/// RMSE of `mean` and NLPD under `N(mean, stddev² + sigma2)`.
pub fn prediction_metrics(y: &[f64], mean: &[f64], stddev: &[f64], sigma2: f64) -> PredictionMetrics {
    let n = y.len() as f64;
    let mut sq = 0.0;
    let mut nlpd = 0.0;
    for ((&t, &m), &s) in y.iter().zip(mean).zip(stddev) {
        let r2 = (t - m) * (t - m);
        let v = s * s + sigma2;
        sq += r2;
        nlpd += 0.5 * (2.0 * PI * v).ln() + r2 / (2.0 * v);
    }
    PredictionMetrics { rmse: (sq / n).sqrt(), nlpd: nlpd / n }
}

pub fn metrics_path(out: &std::path::Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".metrics.json");
    out.with_file_name(name)
}

pub fn cmd_predict(config: &PredictConfig) -> Result<Predictions> {
    let model = read_json::<ModelFile>(&config.model)?.into_model();
    let query = load_table(&config.query)?;
    if query.x.cols() != model.kernel().dim() {
        return Err(CliError::usage(format!(
            "query has {} inputs but the model expects {}",
            query.x.cols(),
            model.kernel().dim()
        )));
    }
    let (mean, var) = clustered_marginals(&model, &query.x)?;
    let stddev: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
    let metrics = query.y.as_ref().map(|y| prediction_metrics(y, &mean, &stddev, model.sigma2()));

    let rows: Vec<Vec<String>> = mean.iter().zip(&stddev).map(|(m, s)| vec![fmt_f64(*m), fmt_f64(*s)]).collect();
    let provenance = Provenance::new("predict", config, "none");
    write_table(&config.out, &provenance, config, &["mean", "stddev"], &rows)?;
    if let Some(m) = &metrics {
        write_json(metrics_path(&config.out), m)?;
    }
    Ok(Predictions { mean, stddev, metrics })
}
