//! Uncertainty propagation over the exact kNN graph of the embeddings.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::neighbors::k_nearest;

/// Exact K-nearest-neighbour graph, self excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<usize>,
    sq_distances: Vec<f64>,
}

impl KnnGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Neighbours of sample `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn sq_distances(&self, i: usize) -> &[f64] {
        &self.sq_distances[i * self.k..(i + 1) * self.k]
    }
}

/// Raw entropy and propagated uncertainty per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyVectors {
    pub raw: Vec<f64>,
    pub propagated: Vec<f64>,
}

/// Brute-force kNN under squared Euclidean distance; `k` clamps to `n - 1`.
pub fn knn_graph(embeddings: &Matrix<f32>, k: usize) -> Result<KnnGraph> {
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::InvalidParam(format!("kNN graph needs at least 2 samples, got {n}")));
    }
    let k = k.min(n - 1);
    let rows = k_nearest(embeddings, embeddings, k, |q, r| q == r, |q, r| {
        sq_dist(embeddings.row(q), embeddings.row(r))
    });
    let mut neighbors = Vec::with_capacity(n * k);
    let mut sq_distances = Vec::with_capacity(n * k);
    for row in rows {
        debug_assert_eq!(row.len(), k);
        for (j, dist) in row {
            neighbors.push(j);
            sq_distances.push(dist);
        }
    }
    Ok(KnnGraph {
        k,
        neighbors,
        sq_distances,
    })
}

#[inline]
pub fn rbf_kernel(sq_distance: f64, rho: f64) -> f64 {
    (-rho * sq_distance).exp()
}

/// `u(x) + sum_i k(x, x_i) u(x_i) / |kNN(x)|` for every sample.
///
/// The divisor is the neighbour count, not the sum of kernel weights.
pub fn propagate(raw: &[f64], graph: &KnnGraph, rho: f64) -> Result<UncertaintyVectors> {
    if graph.len() != raw.len() {
        return Err(Error::InvalidParam(format!(
            "graph over {} samples, uncertainty for {}",
            graph.len(),
            raw.len()
        )));
    }
    let k = graph.k() as f64;
    let propagated = (0..raw.len())
        .into_par_iter()
        .map(|i| {
            let spread: f64 = graph
                .neighbors(i)
                .iter()
                .zip(graph.sq_distances(i))
                .map(|(&j, &d)| rbf_kernel(d, rho) * raw[j])
                .sum();
            raw[i] + spread / k
        })
        .collect();
    Ok(UncertaintyVectors {
        raw: raw.to_vec(),
        propagated,
    })
}
