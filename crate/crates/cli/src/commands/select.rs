use std::time::Instant;

use serde::{Deserialize, Serialize};
use stablegp_core::covertree::{
    build, select_kmeans, select_uniform, spatial_resolution, CoverTreeOptions, InducingSet,
};
use stablegp_core::Matrix;

use crate::config::{Method, SelectConfig};
use crate::error::{CliError, Result};
use crate::io::{load_csv, write_json, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(with = "stablegp_core::serde_float")]
    pub separation: f64,
    pub spatial_resolution: f64,
    pub wall_time_ms: f64,
}

/// File written by `select` and read by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOutput {
    pub provenance: Provenance,
    pub config: SelectConfig,
    pub inducing_set: InducingSet,
    pub metrics: SelectionMetrics,
}

/// Accepts either a `select` output or a bare inducing set.
#[derive(Deserialize)]
#[serde(untagged)]
pub(crate) enum InducingFile {
    Selected { inducing_set: InducingSet },
    Bare(InducingSet),
}

impl InducingFile {
    pub(crate) fn into_set(self) -> InducingSet {
        match self {
            InducingFile::Selected { inducing_set } | InducingFile::Bare(inducing_set) => inducing_set,
        }
    }
}

/// Runs one selection method on raw inputs.
pub fn select_points(x: &Matrix, config: &SelectConfig) -> Result<InducingSet> {
    match config.method {
        Method::Covertree => {
            let eps = config.epsilon.ok_or_else(|| CliError::usage("--method covertree requires --epsilon"))?;
            let options =
                CoverTreeOptions { lloyd_averaging: config.lloyd, voronoi_repartition: config.voronoi, seed: config.seed };
            let tree = build(x, eps, options)?;
            Ok(tree.inducing_points(tree.depth)?)
        }
        Method::Uniform => {
            let m = config.m.ok_or_else(|| CliError::usage("--method uniform requires --m"))?;
            Ok(select_uniform(x, m, config.seed)?)
        }
        Method::Kmeans => {
            let m = config.m.ok_or_else(|| CliError::usage("--method kmeans requires --m"))?;
            Ok(select_kmeans(x, m, config.kmeans_iters, config.seed)?)
        }
    }
}

pub fn cmd_select(config: &SelectConfig) -> Result<SelectOutput> {
    let data = load_csv(&config.data)?;
    let start = Instant::now();
    let inducing_set = select_points(&data.x, config)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let metrics = SelectionMetrics {
        m: inducing_set.len(),
        separation: inducing_set.separation(),
        spatial_resolution: spatial_resolution(&data.x, &inducing_set.points),
        wall_time_ms,
    };
    let out = SelectOutput {
        provenance: Provenance::new("select", config, config.seed),
        config: config.clone(),
        inducing_set,
        metrics,
    };
    write_json(&config.out, &out)?;
    Ok(out)
}
