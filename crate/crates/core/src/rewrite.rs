//! Partition-then-rewrite refinement.
//!
//! Each round links every selected sample to its nearest selected samples
//! from other clusters (and, in multi-round mode, to already-labeled samples)
//! and re-solves each cluster's choice with a hinge penalty on squared
//! distances to those neighbours that fall inside the margin.
//!
//! The neighbour list of cluster `i` never contains `q_i` itself: a
//! self-neighbour would charge every candidate coinciding with `q_i` a
//! constant `gamma * margin`.

use std::collections::HashSet;

use crate::error::Result;
use crate::matrix::{sq_dist, Matrix};
use crate::params::{HyperParams, Sweep};
use crate::partition::{init_score, init_selection, Partition, SelectionState};
use crate::propagation::UncertaintyVectors;

/// A member of the cross-cluster reference pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossNeighbor {
    /// Global sample index at the time the graph was built.
    pub index: usize,
    /// Cluster whose selection this is; `None` for labeled samples.
    pub cluster: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossKnn {
    pub per_cluster_neighbors: Vec<Vec<CrossNeighbor>>,
}

impl CrossKnn {
    /// Sample indices of cluster `i`'s neighbours, nearest first.
    pub fn indices(&self, i: usize) -> Vec<usize> {
        self.per_cluster_neighbors[i].iter().map(|n| n.index).collect()
    }
}

/// The `k_prime` nearest members of `Q` (or `Q ∪ D_l` when `multi_round`)
/// to each `q_i`, excluding `q_i`; ties go to the smaller sample index.
pub fn cross_knn(
    state: &SelectionState,
    embeddings: &Matrix<f32>,
    k_prime: usize,
    multi_round: bool,
) -> CrossKnn {
    let mut pool: Vec<CrossNeighbor> = state
        .selected
        .iter()
        .enumerate()
        .map(|(c, &index)| CrossNeighbor {
            index,
            cluster: Some(c),
        })
        .collect();
    if multi_round {
        pool.extend(state.labeled_pool.iter().map(|&index| CrossNeighbor {
            index,
            cluster: None,
        }));
    }
    let per_cluster_neighbors = state
        .selected
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let z = embeddings.row(q);
            let mut cands: Vec<(f64, CrossNeighbor)> = pool
                .iter()
                .filter(|n| n.cluster != Some(i))
                .map(|n| (sq_dist(z, embeddings.row(n.index)), *n))
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.index.cmp(&b.1.index)));
            cands.truncate(k_prime);
            cands.into_iter().map(|(_, n)| n).collect()
        })
        .collect();
    CrossKnn {
        per_cluster_neighbors,
    }
}

/// `sum_k [margin - |z_j - z_k|^2]_+` over the given neighbour positions.
pub fn margin_penalty(embeddings: &Matrix<f32>, j: usize, neighbors: &[usize], margin: f64) -> f64 {
    let z = embeddings.row(j);
    neighbors
        .iter()
        .map(|&k| (margin - sq_dist(z, embeddings.row(k))).max(0.0))
        .sum()
}

/// Initialization score minus the weighted margin penalty.
pub fn rewrite_score(
    embeddings: &Matrix<f32>,
    unc: &UncertaintyVectors,
    centroid: &[f64],
    params: &HyperParams,
    j: usize,
    neighbors: &[usize],
) -> f64 {
    init_score(embeddings, unc, centroid, params.beta, j)
        - params.gamma * margin_penalty(embeddings, j, neighbors, params.margin)
}

/// Positions of cluster `i`'s cross neighbours given the current selections.
fn neighbor_positions(cknn: &CrossKnn, i: usize, current: &[usize]) -> Vec<usize> {
    cknn.per_cluster_neighbors[i]
        .iter()
        .map(|n| n.cluster.map_or(n.index, |k| current[k]))
        .collect()
}

/// One rewrite round.
///
/// Gauss–Seidel (the default) sweeps clusters in ascending order and lets
/// each penalty see the selections already updated in this round; Jacobi
/// evaluates every cluster against the previous round. Candidates that are
/// another cluster's selection or in the labeled pool are skipped.
pub fn rewrite_step(
    state: &SelectionState,
    part: &Partition,
    unc: &UncertaintyVectors,
    cknn: &CrossKnn,
    embeddings: &Matrix<f32>,
    params: &HyperParams,
) -> SelectionState {
    let labeled: HashSet<usize> = state.labeled_pool.iter().copied().collect();
    let mut next = state.selected.clone();
    for i in 0..part.num_clusters() {
        let current: &[usize] = match params.sweep {
            Sweep::GaussSeidel => &next,
            Sweep::Jacobi => &state.selected,
        };
        let positions = neighbor_positions(cknn, i, current);
        let taken: HashSet<usize> = current
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &q)| q)
            .collect();
        let centroid = part.centroid(i);
        let mut best: Option<(usize, f64)> = None;
        for &j in part.members(i) {
            if taken.contains(&j) || labeled.contains(&j) {
                continue;
            }
            let s = rewrite_score(embeddings, unc, centroid, params, j, &positions);
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((j, s));
            }
        }
        if let Some((j, _)) = best {
            next[i] = j;
        }
    }
    SelectionState {
        selected: next,
        ..state.clone()
    }
}

/// Sum over clusters of [`rewrite_score`] for the current selections, with
/// the cross-cluster neighbours rebuilt for those selections.
pub fn selection_objective(
    state: &SelectionState,
    part: &Partition,
    unc: &UncertaintyVectors,
    embeddings: &Matrix<f32>,
    params: &HyperParams,
) -> f64 {
    let multi_round = !state.labeled_pool.is_empty();
    let cknn = cross_knn(state, embeddings, params.cknn_size, multi_round);
    state
        .selected
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let positions = neighbor_positions(&cknn, i, &state.selected);
            rewrite_score(embeddings, unc, part.centroid(i), params, q, &positions)
        })
        .sum()
}

/// Greedy initialization followed by up to `params.iterations` rewrite
/// rounds, stopping early once a round leaves the selection unchanged.
pub fn run_ptr(
    embeddings: &Matrix<f32>,
    part: &Partition,
    unc: &UncertaintyVectors,
    params: &HyperParams,
    labeled_pool: &[usize],
) -> Result<SelectionState> {
    let multi_round = !labeled_pool.is_empty();
    let mut state = init_selection(part, unc, embeddings, params.beta, labeled_pool)?;
    state.objective_trace.push(selection_objective(&state, part, unc, embeddings, params));
    for round in 1..=params.iterations {
        let cknn = cross_knn(&state, embeddings, params.cknn_size, multi_round);
        let next = rewrite_step(&state, part, unc, &cknn, embeddings, params);
        state.iterations_run = round;
        if next.selected == state.selected {
            state.converged = true;
            break;
        }
        state.selected = next.selected;
        state.rounds_changed += 1;
        state.objective_trace.push(selection_objective(&state, part, unc, embeddings, params));
    }
    Ok(state)
}
