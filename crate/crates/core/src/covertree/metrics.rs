use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::{dist, Matrix};

/// Minimum pairwise distance between rows; `+inf` for fewer than two rows.
pub fn separation(points: &Matrix) -> f64 {
    let m = points.rows();
    let mut best = f64::INFINITY;
    for i in 0..m {
        let zi = points.row(i);
        for j in (i + 1)..m {
            let d = dist(zi, points.row(j));
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Largest distance from a data point to its nearest inducing point.
pub fn spatial_resolution(data: &Matrix, points: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for x in data.row_iter() {
        let nearest = points.row_iter().map(|z| dist(x, z)).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Index of the nearest inducing point for each datum.
    pub labels: Vec<usize>,
    /// Cluster sizes, one per inducing point.
    pub counts: Vec<usize>,
}

/// Nearest-inducing-point clustering with ties broken towards the lowest index.
pub fn cluster_assign(data: &Matrix, z: &Matrix) -> ClusterAssignment {
    let mut labels = Vec::with_capacity(data.rows());
    let mut counts = vec![0; z.rows()];
    for x in data.row_iter() {
        let label = nearest(x, z);
        labels.push(label);
        counts[label] += 1;
    }
    ClusterAssignment { labels, counts }
}

pub(crate) fn nearest(x: &[f64], z: &Matrix) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, zj) in z.row_iter().enumerate() {
        let d = dist(x, zj);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}
