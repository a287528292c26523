//! Separated inducing points: breadth-first cover trees, coverage metrics and
//! baseline selectors.

mod metrics;
mod select;
mod tree;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

pub use metrics::{cluster_assign, separation, spatial_resolution, ClusterAssignment};
pub use select::{select_kmeans, select_uniform};
pub use tree::{build, CoverTree, CoverTreeNode, CoverTreeOptions, NodeId};

/// How an [`InducingSet`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    CoverTree { level: usize },
    Uniform { seed: u64 },
    KMeans { seed: u64, iters: usize },
    /// Supplied directly by the caller.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducingSet {
    pub points: Matrix,
    pub provenance: Provenance,
}

impl InducingSet {
    pub fn new(points: Matrix, provenance: Provenance) -> Self {
        Self { points, provenance }
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn separation(&self) -> f64 {
        separation(&self.points)
    }
}
