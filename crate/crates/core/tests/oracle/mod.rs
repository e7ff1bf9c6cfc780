//! Straight-line reference implementation of the whole selection procedure.
//!
//! Everything is naive and sequential: full sorts instead of selection,
//! O(n^2) distance scans instead of blocked search, nested vectors instead of
//! the library's matrix type. Only the documented conventions are shared
//! with the library: f64 accumulation in dimension order, ties to the smaller
//! index, ChaCha8 k-means++ seeding and the Lloyd stopping rule.

#![allow(clippy::needless_range_loop)]

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Params {
    pub k_support: usize,
    pub knn: usize,
    pub cknn: usize,
    pub rho: f64,
    pub beta: f64,
    pub gamma: f64,
    pub margin: f64,
    pub iterations: usize,
    pub budget: usize,
    pub seed: u64,
    pub jacobi: bool,
}

pub fn d2(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let t = a[i] as f64 - b[i] as f64;
        s += t * t;
    }
    s
}

fn d2_mixed(a: &[f32], c: &[f64]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let t = a[i] as f64 - c[i];
        s += t * t;
    }
    s
}

pub fn entropy(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Raw entropy per sample after prior calibration.
pub fn raw_uncertainty(probs: &[Vec<f32>], raw: Option<&[Vec<f32>]>, k: usize) -> Vec<f64> {
    let n = probs.len();
    let c = probs[0].len();
    let mut union: Vec<usize> = Vec::new();
    for class in 0..c {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            probs[b][class]
                .partial_cmp(&probs[a][class])
                .unwrap()
                .then(a.cmp(&b))
        });
        for &i in order.iter().take(k.min(n)) {
            if !union.contains(&i) {
                union.push(i);
            }
        }
    }
    let source = raw.unwrap_or(probs);
    let mut prior = vec![0.0f64; c];
    for &i in &union {
        for v in 0..c {
            prior[v] += source[i][v] as f64;
        }
    }
    for v in 0..c {
        prior[v] = (prior[v] / union.len() as f64).max(1e-12);
    }
    probs
        .iter()
        .map(|row| {
            let ratios: Vec<f64> = (0..c).map(|v| row[v] as f64 / prior[v]).collect();
            let total: f64 = ratios.iter().sum();
            let cal: Vec<f64> = ratios.iter().map(|r| r / total).collect();
            entropy(&cal)
        })
        .collect()
}

/// Neighbours of every point, sorted by (distance, index), self excluded.
pub fn knn(emb: &[Vec<f32>], k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = emb.len();
    (0..n)
        .map(|i| {
            let mut all: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, d2(&emb[i], &emb[j])))
                .collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k.min(n - 1));
            all
        })
        .collect()
}

pub fn propagate(u: &[f64], graph: &[Vec<(usize, f64)>], rho: f64) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            let mut s = 0.0;
            for &(j, dist) in &graph[i] {
                s += (-rho * dist).exp() * u[j];
            }
            u[i] + s / graph[i].len() as f64
        })
        .collect()
}

/// Returns cluster member lists (local indices, ascending) and centroids.
pub fn kmeans(points: &[Vec<f32>], b: usize, seed: u64) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let m = points.len();
    let d = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let first = rng.gen_range(0..m);
    let mut seeds = vec![first];
    let mut w: Vec<f64> = (0..m).map(|j| d2(&points[j], &points[first])).collect();
    while seeds.len() < b {
        let total: f64 = w.iter().sum();
        let pick;
        if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut found = None;
            let mut last = None;
            for j in 0..m {
                if w[j] > 0.0 {
                    cum += w[j];
                    last = Some(j);
                    if cum > target {
                        found = Some(j);
                        break;
                    }
                }
            }
            pick = found.or(last).unwrap();
        } else {
            pick = (0..m).find(|j| !seeds.contains(j)).unwrap();
        }
        seeds.push(pick);
        for j in 0..m {
            let dist = d2(&points[j], &points[pick]);
            if dist < w[j] {
                w[j] = dist;
            }
        }
        w[pick] = 0.0;
    }

    let mut centroids: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&s| points[s].iter().map(|&v| v as f64).collect())
        .collect();
    let mut assign = vec![0usize; m];
    for _ in 0..100 {
        let mut dist = vec![0.0f64; m];
        for j in 0..m {
            let mut best = 0;
            let mut best_d = d2_mixed(&points[j], &centroids[0]);
            for c in 1..b {
                let dd = d2_mixed(&points[j], &centroids[c]);
                if dd < best_d {
                    best = c;
                    best_d = dd;
                }
            }
            assign[j] = best;
            dist[j] = best_d;
        }
        let mut counts = vec![0usize; b];
        for j in 0..m {
            counts[assign[j]] += 1;
        }
        for e in 0..b {
            if counts[e] == 0 {
                let mut donor: Option<usize> = None;
                for j in 0..m {
                    if counts[assign[j]] > 1 {
                        match donor {
                            Some(p) if dist[j] <= dist[p] => {}
                            _ => donor = Some(j),
                        }
                    }
                }
                let j = donor.unwrap();
                counts[assign[j]] -= 1;
                assign[j] = e;
                counts[e] = 1;
                dist[j] = 0.0;
            }
        }
        let mut next = vec![vec![0.0f64; d]; b];
        for c in 0..b {
            for j in 0..m {
                if assign[j] == c {
                    for t in 0..d {
                        next[c][t] += points[j][t] as f64;
                    }
                }
            }
            for t in 0..d {
                next[c][t] /= counts[c] as f64;
            }
        }
        let mut shift = 0.0;
        let mut scale = 0.0;
        for c in 0..b {
            for t in 0..d {
                shift += (next[c][t] - centroids[c][t]).powi(2);
                scale += centroids[c][t].powi(2);
            }
        }
        let (shift, scale) = (f64::sqrt(shift), f64::sqrt(scale));
        centroids = next;
        if shift == 0.0 || shift < 1e-4 * scale {
            break;
        }
    }
    let mut members = vec![Vec::new(); b];
    for j in 0..m {
        members[assign[j]].push(j);
    }
    (members, centroids)
}

/// Every-candidate evaluation of the rewrite objective for `j` in cluster
/// `c`, given the neighbour positions.
pub fn rewrite_value(
    emb: &[Vec<f32>],
    u_prop: &[f64],
    centroid: &[f64],
    p: &Params,
    j: usize,
    neighbors: &[usize],
) -> f64 {
    let mut penalty = 0.0;
    for &k in neighbors {
        let gap = p.margin - d2(&emb[j], &emb[k]);
        if gap > 0.0 {
            penalty += gap;
        }
    }
    u_prop[j] - p.beta * d2_mixed(&emb[j], centroid) - p.gamma * penalty
}

/// Cross neighbours of q_i: (cluster or None for labeled, index), nearest first.
pub fn cross_neighbors(
    emb: &[Vec<f32>],
    selected: &[usize],
    labeled: &[usize],
    i: usize,
    k: usize,
) -> Vec<(Option<usize>, usize)> {
    let mut pool: Vec<(Option<usize>, usize, f64)> = Vec::new();
    for (c, &q) in selected.iter().enumerate() {
        if c != i {
            pool.push((Some(c), q, d2(&emb[selected[i]], &emb[q])));
        }
    }
    for &l in labeled {
        pool.push((None, l, d2(&emb[selected[i]], &emb[l])));
    }
    pool.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.1.cmp(&b.1)));
    pool.truncate(k);
    pool.into_iter().map(|(c, q, _)| (c, q)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub init: Vec<usize>,
    pub selected: Vec<usize>,
    pub iterations_run: usize,
    pub u_prop: Vec<f64>,
}

/// Initialization plus rewrite rounds, given clusters (global indices) and
/// centroids.
pub fn ptr(
    emb: &[Vec<f32>],
    u_prop: &[f64],
    members: &[Vec<usize>],
    centroids: &[Vec<f64>],
    labeled: &[usize],
    p: &Params,
) -> (Vec<usize>, Vec<usize>, usize) {
    let b = members.len();
    let mut q = vec![0usize; b];
    for c in 0..b {
        let mut best = usize::MAX;
        let mut best_s = f64::NEG_INFINITY;
        for &j in &members[c] {
            if labeled.contains(&j) {
                continue;
            }
            let s = u_prop[j] - p.beta * d2_mixed(&emb[j], &centroids[c]);
            if best == usize::MAX || s > best_s {
                best = j;
                best_s = s;
            }
        }
        q[c] = best;
    }
    let init = q.clone();
    let mut rounds = 0;
    for t in 1..=p.iterations {
        rounds = t;
        let lists: Vec<Vec<(Option<usize>, usize)>> = (0..b)
            .map(|i| cross_neighbors(emb, &q, labeled, i, p.cknn))
            .collect();
        let old = q.clone();
        for i in 0..b {
            let view = if p.jacobi { old.clone() } else { q.clone() };
            let positions: Vec<usize> = lists[i]
                .iter()
                .map(|&(c, idx)| match c {
                    Some(c) => view[c],
                    None => idx,
                })
                .collect();
            let mut best = usize::MAX;
            let mut best_s = f64::NEG_INFINITY;
            for &j in &members[i] {
                let taken = (0..b).any(|k| k != i && view[k] == j);
                if taken || labeled.contains(&j) {
                    continue;
                }
                let s = rewrite_value(emb, u_prop, &centroids[i], p, j, &positions);
                if best == usize::MAX || s > best_s {
                    best = j;
                    best_s = s;
                }
            }
            q[i] = best;
        }
        if q == old {
            break;
        }
    }
    (init, q, rounds)
}

/// The complete procedure over `emb` minus `labeled`.
pub fn select(
    emb: &[Vec<f32>],
    probs: &[Vec<f32>],
    raw: Option<&[Vec<f32>]>,
    labeled: &[usize],
    p: &Params,
) -> Outcome {
    let n = emb.len();
    let pool: Vec<usize> = (0..n).filter(|i| !labeled.contains(i)).collect();
    let sub_emb: Vec<Vec<f32>> = pool.iter().map(|&i| emb[i].clone()).collect();
    let sub_probs: Vec<Vec<f32>> = pool.iter().map(|&i| probs[i].clone()).collect();
    let sub_raw: Option<Vec<Vec<f32>>> = raw.map(|r| pool.iter().map(|&i| r[i].clone()).collect());

    let u = raw_uncertainty(&sub_probs, sub_raw.as_deref(), p.k_support);
    let graph = knn(&sub_emb, p.knn);
    let local = propagate(&u, &graph, p.rho);
    let mut u_prop = vec![0.0; n];
    for (l, &g) in pool.iter().enumerate() {
        u_prop[g] = local[l];
    }

    let (local_members, centroids) = kmeans(&sub_emb, p.budget, p.seed);
    let members: Vec<Vec<usize>> = local_members
        .iter()
        .map(|m| m.iter().map(|&l| pool[l]).collect())
        .collect();
    let (init, selected, iterations_run) = ptr(emb, &u_prop, &members, &centroids, labeled, p);
    Outcome {
        init,
        selected,
        iterations_run,
        u_prop,
    }
}
