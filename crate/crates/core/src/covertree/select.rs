use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::metrics::nearest;
use super::{InducingSet, Provenance};
use crate::linalg::Matrix;
use crate::{Error, Result};

fn check_m(data: &Matrix, m: usize) -> Result<()> {
    if m == 0 || m > data.rows() {
        return Err(Error::invalid("m", format!("must lie in 1..={}, got {m}", data.rows())));
    }
    Ok(())
}

fn sample_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = crate::seeded_rng(seed);
    rand::seq::index::sample(&mut rng, n, m).into_vec()
}

/// `m` distinct data points drawn uniformly without replacement.
pub fn select_uniform(data: &Matrix, m: usize, seed: u64) -> Result<InducingSet> {
    check_m(data, m)?;
    let idx = sample_indices(data.rows(), m, seed);
    Ok(InducingSet::new(data.select_rows(&idx), Provenance::Uniform { seed }))
}

/// Lloyd's algorithm from a uniform initialization. Empty clusters keep their
/// previous centroid; iteration stops early once labels are stable.
pub fn select_kmeans(data: &Matrix, m: usize, iters: usize, seed: u64) -> Result<InducingSet> {
    check_m(data, m)?;
    let d = data.cols();
    let mut centroids = data.select_rows(&sample_indices(data.rows(), m, seed));
    let mut labels = vec![usize::MAX; data.rows()];
    for _ in 0..iters {
        let mut changed = false;
        for (i, x) in data.row_iter().enumerate() {
            let l = nearest(x, &centroids);
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(m, d);
        let mut counts = vec![0usize; m];
        for (x, &l) in data.row_iter().zip(&labels) {
            counts[l] += 1;
            sums.row_mut(l).iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let inv = 1.0 / c as f64;
                centroids.row_mut(j).iter_mut().zip(sums.row(j)).for_each(|(z, s)| *z = s * inv);
            }
        }
    }
    Ok(InducingSet::new(centroids, Provenance::KMeans { seed, iters }))
}
