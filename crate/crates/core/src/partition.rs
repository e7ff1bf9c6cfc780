//! K-Means partitioning of the pool and greedy one-per-cluster initialization.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, sq_dist_mixed, Matrix};
use crate::neighbors::k_nearest;
use crate::propagation::UncertaintyVectors;

pub const MAX_LLOYD_ITERATIONS: usize = 100;
/// Lloyd stops once the centroid movement, relative to the centroid norms, drops below this.
pub const CENTROID_SHIFT_TOLERANCE: f64 = 1e-4;

/// Clusters over a pool of samples. Indices in `cluster_members` are global.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pool: Vec<usize>,
    assignment: Vec<usize>,
    centroids: Matrix<f64>,
    cluster_members: Vec<Vec<usize>>,
    inertia_trace: Vec<f64>,
}

impl Partition {
    /// Builds a partition from an explicit assignment of `pool` (aligned
    /// element-wise) into `b` clusters; centroids are member means.
    pub fn from_assignment(
        embeddings: &Matrix<f32>,
        pool: Vec<usize>,
        assignment: Vec<usize>,
        b: usize,
    ) -> Result<Self> {
        if pool.len() != assignment.len() {
            return Err(Error::InvalidParam("assignment length differs from pool".into()));
        }
        let mut cluster_members = vec![Vec::new(); b];
        for (&g, &a) in pool.iter().zip(&assignment) {
            if a >= b {
                return Err(Error::InvalidParam(format!("cluster id {a} >= {b}")));
            }
            cluster_members[a].push(g);
        }
        if let Some(i) = cluster_members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParam(format!("cluster {i} is empty")));
        }
        for m in &mut cluster_members {
            m.sort_unstable();
        }
        let centroids = member_means(embeddings, &cluster_members);
        Ok(Self {
            pool,
            assignment,
            centroids,
            cluster_members,
            inertia_trace: Vec::new(),
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_members.len()
    }

    /// Global indices of the clustered samples.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// Cluster id of each entry of [`Partition::pool`].
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn centroids(&self) -> &Matrix<f64> {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        self.centroids.row(i)
    }

    /// Members of cluster `i`, ascending global index.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.cluster_members[i]
    }

    pub fn cluster_members(&self) -> &[Vec<usize>] {
        &self.cluster_members
    }

    /// Within-cluster sum of squares after each Lloyd iteration.
    pub fn inertia_trace(&self) -> &[f64] {
        &self.inertia_trace
    }

    pub fn inertia(&self, embeddings: &Matrix<f32>) -> f64 {
        self.cluster_members
            .iter()
            .enumerate()
            .map(|(c, m)| {
                m.iter()
                    .map(|&g| sq_dist_mixed(embeddings.row(g), self.centroid(c)))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Fixed-order f64 mean of each member list.
fn member_means(embeddings: &Matrix<f32>, members: &[Vec<usize>]) -> Matrix<f64> {
    let d = embeddings.cols();
    let mut centroids = Matrix::filled(members.len(), d, 0.0f64);
    for (c, m) in members.iter().enumerate() {
        let row = centroids.row_mut(c);
        for &g in m {
            for (acc, &v) in row.iter_mut().zip(embeddings.row(g)) {
                *acc += v as f64;
            }
        }
        let count = m.len() as f64;
        for v in row.iter_mut() {
            *v /= count;
        }
    }
    centroids
}

/// K-Means over every row of `embeddings`.
pub fn kmeans(embeddings: &Matrix<f32>, b: usize, seed: u64) -> Result<Partition> {
    let pool: Vec<usize> = (0..embeddings.rows()).collect();
    kmeans_pool(embeddings, &pool, b, seed)
}

/// K-Means over the rows listed in `pool`.
///
/// k-means++ seeding from a ChaCha8 stream, then Lloyd iterations until the
/// relative centroid shift falls below [`CENTROID_SHIFT_TOLERANCE`] or
/// [`MAX_LLOYD_ITERATIONS`] is hit. A cluster left empty by an assignment
/// step takes the point farthest from its own centroid.
pub fn kmeans_pool(embeddings: &Matrix<f32>, pool: &[usize], b: usize, seed: u64) -> Result<Partition> {
    if b == 0 {
        return Err(Error::InvalidParam("number of clusters must be at least 1".into()));
    }
    if b > pool.len() {
        return Err(Error::BudgetExceedsPool {
            budget: b,
            pool: pool.len(),
        });
    }
    let points = embeddings.select_rows(pool);
    let m = points.rows();
    let d = points.cols();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp(&points, b, &mut rng);
    let mut centroids = Matrix::filled(b, d, 0.0f64);
    for (c, &s) in seeds.iter().enumerate() {
        for (dst, &v) in centroids.row_mut(c).iter_mut().zip(points.row(s)) {
            *dst = v as f64;
        }
    }

    let mut assignment = vec![0usize; m];
    let mut inertia_trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut dist = assign(&points, &centroids, &mut assignment);
        repair_empty(&mut assignment, &mut dist, b);

        let mut members = vec![Vec::new(); b];
        for (j, &a) in assignment.iter().enumerate() {
            members[a].push(j);
        }
        let next = member_means(&points, &members);
        let inertia: f64 = (0..m)
            .map(|j| sq_dist_mixed(points.row(j), next.row(assignment[j])))
            .sum();
        inertia_trace.push(inertia);

        let shift: f64 = next
            .as_slice()
            .iter()
            .zip(centroids.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = centroids.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        centroids = next;
        if shift == 0.0 || shift < CENTROID_SHIFT_TOLERANCE * scale {
            break;
        }
    }

    let mut cluster_members = vec![Vec::new(); b];
    for (j, &a) in assignment.iter().enumerate() {
        cluster_members[a].push(pool[j]);
    }
    for members in &mut cluster_members {
        members.sort_unstable();
    }
    Ok(Partition {
        pool: pool.to_vec(),
        assignment,
        centroids,
        cluster_members,
        inertia_trace,
    })
}

/// D²-weighted seeding; local row indices of the chosen seeds.
fn kmeans_pp(points: &Matrix<f32>, b: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = points.rows();
    let first = rng.gen_range(0..m);
    let mut chosen = vec![first];
    let mut is_chosen = vec![false; m];
    is_chosen[first] = true;
    let mut weight: Vec<f64> = (0..m)
        .map(|j| sq_dist(points.row(j), points.row(first)))
        .collect();
    while chosen.len() < b {
        let total: f64 = weight.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            let mut last_positive = None;
            for (j, &w) in weight.iter().enumerate() {
                if w > 0.0 {
                    cum += w;
                    last_positive = Some(j);
                    if cum > target {
                        pick = Some(j);
                        break;
                    }
                }
            }
            pick.or(last_positive).expect("positive total has a positive weight")
        } else {
            // every remaining point coincides with a seed
            (0..m).find(|&j| !is_chosen[j]).expect("b <= m")
        };
        chosen.push(pick);
        is_chosen[pick] = true;
        let row = points.row(pick);
        weight
            .par_iter_mut()
            .enumerate()
            .for_each(|(j, w)| *w = w.min(sq_dist(points.row(j), row)));
        weight[pick] = 0.0;
    }
    chosen
}

/// Nearest-centroid assignment (ties to the smaller cluster id); returns the distances.
fn assign(points: &Matrix<f32>, centroids: &Matrix<f64>, assignment: &mut [usize]) -> Vec<f64> {
    let cast = Matrix::from_vec(
        centroids.rows(),
        centroids.cols(),
        centroids.as_slice().iter().map(|&v| v as f32).collect(),
    );
    let nearest = k_nearest(points, &cast, 1, |_, _| false, |q, c| {
        sq_dist_mixed(points.row(q), centroids.row(c))
    });
    nearest
        .into_iter()
        .zip(assignment.iter_mut())
        .map(|(best, slot)| {
            let (c, dist) = best[0];
            *slot = c;
            dist
        })
        .collect()
}

fn repair_empty(assignment: &mut [usize], dist: &mut [f64], b: usize) {
    let mut counts = vec![0usize; b];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    for empty in 0..b {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for j in 0..assignment.len() {
            if counts[assignment[j]] > 1 && donor.is_none_or(|p| dist[j] > dist[p]) {
                donor = Some(j);
            }
        }
        let j = donor.expect("b <= m leaves a cluster with spare members");
        counts[assignment[j]] -= 1;
        assignment[j] = empty;
        counts[empty] = 1;
        dist[j] = 0.0;
    }
}

/// The evolving selection: one global index per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionState {
    pub selected: Vec<usize>,
    /// Already-labeled samples (multi-round); never selected.
    pub labeled_pool: Vec<usize>,
    /// Total objective of the selection after initialization and each round.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    /// Rounds that changed at least one selection.
    pub rounds_changed: usize,
    /// Whether a round left the selection unchanged.
    pub converged: bool,
}

/// `u_prop(x) - beta * |z - centroid|^2`.
pub fn init_score(
    embeddings: &Matrix<f32>,
    unc: &UncertaintyVectors,
    centroid: &[f64],
    beta: f64,
    j: usize,
) -> f64 {
    unc.propagated[j] - beta * sq_dist_mixed(embeddings.row(j), centroid)
}

/// Greedy per-cluster argmax of [`init_score`]; ties go to the smaller index.
pub fn init_selection(
    part: &Partition,
    unc: &UncertaintyVectors,
    embeddings: &Matrix<f32>,
    beta: f64,
    labeled_pool: &[usize],
) -> Result<SelectionState> {
    let labeled: HashSet<usize> = labeled_pool.iter().copied().collect();
    let selected = (0..part.num_clusters())
        .into_par_iter()
        .map(|c| {
            let centroid = part.centroid(c);
            let mut best: Option<(usize, f64)> = None;
            for &j in part.members(c) {
                if labeled.contains(&j) {
                    continue;
                }
                let s = init_score(embeddings, unc, centroid, beta, j);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((j, s));
                }
            }
            best.map(|(j, _)| j)
                .ok_or_else(|| Error::InvalidParam(format!("cluster {c} has no selectable member")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionState {
        selected,
        labeled_pool: labeled_pool.to_vec(),
        objective_trace: Vec::new(),
        iterations_run: 0,
        rounds_changed: 0,
        converged: false,
    })
}
