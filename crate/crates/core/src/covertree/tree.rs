use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{InducingSet, Provenance};
use crate::linalg::{dist, Matrix};
use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverTreeOptions {
    /// Move each new node to the mean of nearby unclaimed data when that keeps
    /// it clear of existing nodes.
    pub lloyd_averaging: bool,
    /// Reassign each level's data to the nearest node after it is built.
    pub voronoi_repartition: bool,
    /// Keys the permutation used to pick new nodes from unclaimed data.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverTreeNode {
    pub location: Vec<f64>,
    pub level: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Same-level nodes within the level's neighbor radius, including the node itself.
    pub r_neighbors: Vec<NodeId>,
    /// Data indices owned by this node, ascending.
    pub assigned: Vec<usize>,
}

/// Leveled tree whose level-`ℓ` nodes are `R_ℓ`-separated and cover the data
/// at resolution `R_ℓ = 2^{L−ℓ}·ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverTree {
    pub epsilon: f64,
    pub d_max: f64,
    /// Deepest level `L`; levels run `0..=L`.
    pub depth: usize,
    /// `radii[ℓ] = R_ℓ`.
    pub radii: Vec<f64>,
    pub options: CoverTreeOptions,
    pub nodes: Vec<CoverTreeNode>,
    /// Node ids per level, in creation order.
    pub levels: Vec<Vec<NodeId>>,
}

impl CoverTree {
    pub fn node(&self, id: NodeId) -> &CoverTreeNode {
        &self.nodes[id]
    }

    pub fn level_nodes(&self, level: usize) -> &[NodeId] {
        &self.levels[level]
    }

    pub fn radius(&self, level: usize) -> f64 {
        self.radii[level]
    }

    /// Radius within which same-level nodes are recorded as R-neighbors.
    pub fn neighbor_radius(&self, level: usize) -> f64 {
        neighbor_factor(level, self.depth) * self.radii[level]
    }

    /// Locations of every node at `level` (row order = creation order).
    pub fn level_points(&self, level: usize) -> Result<Matrix> {
        if level > self.depth {
            return Err(Error::invalid("level", format!("must be at most {}, got {level}", self.depth)));
        }
        let ids = &self.levels[level];
        let d = self.nodes[0].location.len();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&self.nodes[id].location);
        }
        Matrix::from_row_major(ids.len(), d, data)
    }

    /// Inducing points taken from `level`; the finest level is `self.depth`.
    pub fn inducing_points(&self, level: usize) -> Result<InducingSet> {
        Ok(InducingSet::new(self.level_points(level)?, Provenance::CoverTree { level }))
    }
}

/// Neighbor radius multiplier `b_ℓ` in `b_ℓ·R_ℓ`.
fn neighbor_factor(level: usize, depth: usize) -> f64 {
    4.0 - 3.0 * libm::exp2(level as f64 - depth as f64)
}

/// Breadth-first cover-tree construction at target resolution `epsilon`.
pub fn build(data: &Matrix, epsilon: f64, options: CoverTreeOptions) -> Result<CoverTree> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::Empty("cover tree data"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
    }
    if !data.is_finite() {
        return Err(Error::NonFinite("cover tree data"));
    }
    let d = data.cols();
    let mut mean = vec![0.0; d];
    for x in data.row_iter() {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let d_max = data.row_iter().map(|x| dist(&mean, x)).fold(0.0, f64::max);

    let root = CoverTreeNode {
        location: mean.clone(),
        level: 0,
        parent: None,
        children: Vec::new(),
        r_neighbors: vec![0],
        assigned: (0..n).collect(),
    };

    let raw = libm::ceil(libm::log2(d_max / epsilon));
    if !(raw >= 1.0) {
        // Everything is already within ε of the mean: one node per level.
        let mut child = root.clone();
        child.level = 1;
        child.parent = Some(0);
        child.r_neighbors = vec![1];
        let mut root = root;
        root.children = vec![1];
        return Ok(CoverTree {
            epsilon,
            d_max,
            depth: 1,
            radii: vec![2.0 * epsilon, epsilon],
            options,
            nodes: vec![root, child],
            levels: vec![vec![0], vec![1]],
        });
    }
    let mut depth = raw as usize;
    while libm::ldexp(epsilon, depth as i32) < d_max {
        depth += 1;
    }
    let radii: Vec<f64> = (0..=depth).map(|l| libm::ldexp(epsilon, (depth - l) as i32)).collect();

    let rank = seeded_rank(n, options.seed);
    let mut tree = CoverTree {
        epsilon,
        d_max,
        depth,
        radii,
        options,
        nodes: vec![root],
        levels: vec![vec![0]],
    };
    for level in 1..=depth {
        build_level(&mut tree, data, level, &rank);
    }
    for node in &mut tree.nodes {
        node.assigned.sort_unstable();
    }
    Ok(tree)
}

/// `rank[i]` is the position of datum `i` in a seed-keyed permutation.
fn seeded_rank(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::seeded_rng(seed));
    let mut rank = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    rank
}

fn build_level(tree: &mut CoverTree, data: &Matrix, level: usize, rank: &[usize]) {
    let radius = tree.radii[level];
    let parents = tree.levels[level - 1].clone();
    let first_parent = parents[0];
    let local = |id: NodeId| id - first_parent;

    // Unclaimed data per parent, ordered by rank so the head is the next pick.
    let mut remaining: Vec<Vec<usize>> = parents
        .iter()
        .map(|&p| {
            let mut a = tree.nodes[p].assigned.clone();
            a.sort_unstable_by_key(|&i| rank[i]);
            a
        })
        .collect();
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); parents.len()];
    let mut ids = Vec::new();

    for (pi, &p) in parents.iter().enumerate() {
        while let Some(&pick) = remaining[pi].first() {
            let mut location = data.row(pick).to_vec();
            if tree.options.lloyd_averaging {
                if let Some(avg) = local_average(tree, data, &remaining[pi], &location, radius, p, &children, local) {
                    location = avg;
                }
            }
            let id = tree.nodes.len();
            let mut assigned = Vec::new();
            for &r in &tree.nodes[p].r_neighbors {
                let pool = &mut remaining[local(r)];
                pool.retain(|&i| {
                    let inside = dist(data.row(i), &location) <= radius;
                    if inside {
                        assigned.push(i);
                    }
                    !inside
                });
            }
            debug_assert!(!assigned.is_empty());
            tree.nodes.push(CoverTreeNode {
                location,
                level,
                parent: Some(p),
                children: Vec::new(),
                r_neighbors: Vec::new(),
                assigned,
            });
            children[pi].push(id);
            ids.push(id);
        }
    }

    let reach = neighbor_factor(level, tree.depth) * radius;
    for &c in &ids {
        let p = tree.nodes[c].parent.expect("non-root node");
        let mut nbrs = Vec::new();
        for &r in &tree.nodes[p].r_neighbors {
            for &s in &children[local(r)] {
                if dist(&tree.nodes[s].location, &tree.nodes[c].location) <= reach {
                    nbrs.push(s);
                }
            }
        }
        nbrs.sort_unstable();
        tree.nodes[c].r_neighbors = nbrs;
    }

    if tree.options.voronoi_repartition {
        let mut fresh: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
        let first_child = ids[0];
        for &q in &parents {
            let mut candidates: Vec<NodeId> =
                tree.nodes[q].r_neighbors.iter().flat_map(|&r| children[local(r)].iter().copied()).collect();
            candidates.sort_unstable();
            for &i in &tree.nodes[q].assigned {
                let x = data.row(i);
                let mut best = (f64::INFINITY, candidates[0]);
                for &c in &candidates {
                    let dc = dist(x, &tree.nodes[c].location);
                    if dc < best.0 {
                        best = (dc, c);
                    }
                }
                fresh[best.1 - first_child].push(i);
            }
        }
        for (&c, a) in ids.iter().zip(fresh) {
            tree.nodes[c].assigned = a;
        }
    }

    for (pi, &p) in parents.iter().enumerate() {
        tree.nodes[p].children = core::mem::take(&mut children[pi]);
    }
    tree.levels.push(ids);
}

/// Mean of the parent's unclaimed data within `radius` of `location`, if it
/// lies farther than `radius` from every child of the parent's R-neighbors.
#[allow(clippy::too_many_arguments)]
fn local_average(
    tree: &CoverTree,
    data: &Matrix,
    pool: &[usize],
    location: &[f64],
    radius: f64,
    parent: NodeId,
    children: &[Vec<NodeId>],
    local: impl Fn(NodeId) -> usize,
) -> Option<Vec<f64>> {
    let mut avg = vec![0.0; location.len()];
    let mut count = 0usize;
    for &i in pool {
        let x = data.row(i);
        if dist(x, location) <= radius {
            avg.iter_mut().zip(x).for_each(|(a, v)| *a += v);
            count += 1;
        }
    }
    avg.iter_mut().for_each(|a| *a /= count as f64);
    // The picked point must still be claimed by the node placed at the average.
    if !(dist(&avg, location) <= radius) {
        return None;
    }
    let clear = tree.nodes[parent]
        .r_neighbors
        .iter()
        .flat_map(|&r| children[local(r)].iter())
        .all(|&c| dist(&avg, &tree.nodes[c].location) > radius);
    clear.then_some(avg)
}
