//! Command-line surface. Each subcommand's arguments double as its
//! experiment config: they are hashed into the provenance header and written
//! to the JSON sidecar of every table.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use stablegp_core::kernels::KernelFamily;

#[derive(Debug, Parser)]
#[command(name = "stablegp", version, about = "Stable sparse Gaussian process regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    /// Choose inducing points from a dataset.
    Select(SelectConfig),
    /// Fit the clustered-data model and optionally train its hyperparameters.
    Fit(FitConfig),
    /// Posterior mean and standard deviation at query points.
    Predict(PredictConfig),
    /// Approximation error and conditioning across spatial resolutions.
    SweepResolution(SweepResolutionConfig),
    /// Condition numbers and solve errors for KMS matrices.
    KmsDemo(KmsDemoConfig),
    /// Conditioning and test error across data sizes and inducing set sizes.
    DatasizeSweep(DatasizeSweepConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Select(_) => "select",
            ExperimentConfig::Fit(_) => "fit",
            ExperimentConfig::Predict(_) => "predict",
            ExperimentConfig::SweepResolution(_) => "sweep-resolution",
            ExperimentConfig::KmsDemo(_) => "kms-demo",
            ExperimentConfig::DatasizeSweep(_) => "datasize-sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Covertree,
    Uniform,
    Kmeans,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Covertree => "covertree",
            Method::Uniform => "uniform",
            Method::Kmeans => "kmeans",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Se,
    Matern12,
    Matern32,
    Matern52,
}

impl From<Family> for KernelFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Se => KernelFamily::SquaredExponential,
            Family::Matern12 => KernelFamily::Matern12,
            Family::Matern32 => KernelFamily::Matern32,
            Family::Matern52 => KernelFamily::Matern52,
        }
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SelectConfig {
    /// Dataset CSV with header x1,...,xd,y.
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Covertree)]
    pub method: Method,
    /// Spatial resolution of the cover tree's finest level.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Number of inducing points for uniform and k-means selection.
    #[arg(long = "m")]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cover tree: move new nodes to the mean of nearby data.
    #[arg(long)]
    pub lloyd: bool,
    /// Cover tree: reassign data to the nearest node after each level.
    #[arg(long)]
    pub voronoi: bool,
    #[arg(long, default_value_t = 50)]
    pub kmeans_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct FitConfig {
    pub data: PathBuf,
    /// Inducing points written by `select`, or a bare inducing set.
    pub inducing: PathBuf,
    /// Kernel JSON: {"family": "SquaredExponential", "variance": 1.0, "lengthscales": [0.5]}.
    pub kernel: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub sigma2: f64,
    /// Optimizer steps; 0 keeps the closed-form fit.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1000)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f64,
    /// Hutchinson probes per step; 0 computes traces exactly.
    #[arg(long, default_value_t = 10)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct PredictConfig {
    /// Model JSON written by `fit`.
    pub model: PathBuf,
    /// Query CSV with header x1,...,xd and an optional y column.
    pub query: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SweepResolutionConfig {
    #[arg(long = "d", value_delimiter = ',', default_values_t = [1, 2])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6])]
    pub epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9])]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub sigma2: f64,
    #[arg(long, value_enum, default_value_t = Family::Se)]
    pub family: Family,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct KmsDemoConfig {
    #[arg(long = "rho", value_delimiter = ',', default_values_t = [0.9, 0.99, 0.999])]
    pub rhos: Vec<f64>,
    #[arg(long = "n", value_delimiter = ',', default_values_t = [64, 128, 256, 512, 1024, 2048, 4096])]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct DatasizeSweepConfig {
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_list: Vec<usize>,
    #[arg(long = "method", value_enum, value_delimiter = ',', default_values_t = [Method::Covertree, Method::Uniform, Method::Kmeans])]
    pub methods: Vec<Method>,
    /// Fraction of the data held out for test RMSE.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma2: f64,
    /// Kernel JSON; defaults to an isotropic squared exponential with unit lengthscale.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Optimizer steps per fit.
    #[arg(long, default_value_t = 0)]
    pub steps: usize,
    #[arg(long, default_value_t = 20)]
    pub kmeans_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> ExperimentConfig {
        Cli::try_parse_from(args).unwrap().command
    }

    #[test]
    fn configs_round_trip_through_json() {
        let configs = [
            parse(&["stablegp", "select", "d.csv", "--epsilon", "0.1", "--lloyd", "--out", "z.json"]),
            parse(&["stablegp", "fit", "d.csv", "z.json", "k.json", "--sigma2", "0.3", "--out", "m.json"]),
            parse(&["stablegp", "predict", "m.json", "q.csv", "--out", "p.csv"]),
            parse(&["stablegp", "sweep-resolution", "--d", "1,2,4", "--epsilons", "0.1,0.30000000000000004", "--out", "t.csv"]),
            parse(&["stablegp", "kms-demo", "--rho", "0.5,0.999", "--n", "8", "--out", "k.csv"]),
            parse(&["stablegp", "datasize-sweep", "d.csv", "--n-list", "10,20", "--m-list", "5", "--method", "uniform", "--out", "s.csv"]),
        ];
        for c in configs {
            let text = serde_json::to_string(&c).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, c, "{text}");
            assert!(text.contains(&format!("\"command\":\"{}\"", c.name())));
        }
    }

    #[test]
    fn list_defaults() {
        let ExperimentConfig::SweepResolution(c) = parse(&["stablegp", "sweep-resolution", "--out", "t.csv"]) else {
            panic!("wrong subcommand");
        };
        assert_eq!(c.dims, vec![1, 2]);
        assert_eq!(c.seeds.len(), 10);
        assert_eq!(c.n, 1000);
    }

    #[test]
    fn unknown_method_is_rejected() {
        assert!(Cli::try_parse_from(["stablegp", "select", "d.csv", "--method", "magic", "--out", "z"]).is_err());
    }
}
