//! Experiment harness for `stablegp-core`: CSV/JSON ingestion, the
//! `stablegp` subcommands and the sweeps behind them.
//!
//! Every table is written as CSV with `# command`, `# config_hash` and
//! `# seed` header lines, next to a `<table>.config.json` sidecar holding the
//! full config.

pub mod commands;
pub mod config;
mod error;
pub mod io;
pub mod parallel;
pub mod stats;

pub use config::{Cli, ExperimentConfig};
pub use error::{CliError, Result};

/// Runs one parsed subcommand, writing its outputs to disk.
pub fn run(config: &ExperimentConfig) -> Result<()> {
    match config {
        ExperimentConfig::Select(c) => {
            let out = commands::cmd_select(c)?;
            println!(
                "M={} separation={} spatial_resolution={}",
                out.metrics.m, out.metrics.separation, out.metrics.spatial_resolution
            );
        }
        ExperimentConfig::Fit(c) => {
            let out = commands::cmd_fit(c)?;
            println!("M={} sigma2={}", out.model.len(), out.model.sigma2());
        }
        ExperimentConfig::Predict(c) => {
            let out = commands::cmd_predict(c)?;
            if let Some(m) = out.metrics {
                println!("rmse={} nlpd={}", m.rmse, m.nlpd);
            }
        }
        ExperimentConfig::SweepResolution(c) => {
            let rows = commands::cmd_sweep_resolution(c)?;
            report_failures(rows.iter().filter(|r| !r.is_ok()).count(), rows.len());
        }
        ExperimentConfig::KmsDemo(c) => {
            let rows = commands::cmd_kms_demo(c)?;
            report_failures(rows.iter().filter(|r| r.status != "ok").count(), rows.len());
        }
        ExperimentConfig::DatasizeSweep(c) => {
            let rows = commands::cmd_datasize_sweep(c)?;
            report_failures(rows.iter().filter(|r| r.status != "ok").count(), rows.len());
        }
    }
    Ok(())
}

fn report_failures(failed: usize, total: usize) {
    if failed > 0 {
        eprintln!("warning: {failed} of {total} rows failed; see the status column");
    }
}
