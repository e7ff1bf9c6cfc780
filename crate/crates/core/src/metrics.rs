//! Selection-quality diagnostics: class imbalance, label-distribution
//! divergence, feature-space diversity and representativeness.
//!
//! Unbounded values (a class never selected, a full-coverage selection) are
//! reported as `f64::INFINITY`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

/// Neighbours used by [`representativeness`] unless told otherwise.
pub const REPRESENTATIVENESS_K: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub imb: f64,
    pub ldd: f64,
    pub diversity: f64,
    pub representativeness_mean: f64,
    pub representativeness: Vec<f64>,
    /// Which embedding matrix the geometric metrics were computed on.
    pub embedding_source: String,
}

pub fn class_counts(labels: &[u32], c: usize) -> Vec<usize> {
    let mut counts = vec![0usize; c];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts
}

/// Largest over smallest class count; infinite when some class is absent.
pub fn imbalance(selected_labels: &[u32], c: usize) -> f64 {
    let counts = class_counts(selected_labels, c);
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    if min == 0 {
        f64::INFINITY
    } else {
        max as f64 / min as f64
    }
}

/// `KL(q || p)` with `q` the selected-label frequencies and `p` the reference.
pub fn label_divergence(selected_labels: &[u32], reference: &[f64]) -> f64 {
    let counts = class_counts(selected_labels, reference.len());
    let total = selected_labels.len() as f64;
    counts
        .iter()
        .zip(reference)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &p)| {
            let q = n as f64 / total;
            if p > 0.0 {
                q * (q / p).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Class frequencies of a label sequence.
pub fn label_frequencies(labels: &[u32], c: usize) -> Vec<f64> {
    let total = labels.len() as f64;
    class_counts(labels, c)
        .into_iter()
        .map(|n| n as f64 / total)
        .collect()
}

/// Inverse mean Euclidean distance from each pool point to its nearest
/// selected point; infinite when that mean is zero.
pub fn diversity(selected: &[usize], embeddings: &Matrix<f32>) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::InvalidParam("diversity of an empty selection".into()));
    }
    if let Some(&index) = selected.iter().find(|&&i| i >= embeddings.rows()) {
        return Err(Error::IndexOutOfRange {
            index,
            n: embeddings.rows(),
        });
    }
    let nearest: Vec<f64> = (0..embeddings.rows())
        .into_par_iter()
        .map(|i| {
            let z = embeddings.row(i);
            selected
                .iter()
                .map(|&q| sq_dist(z, embeddings.row(q)))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    // sequential sum keeps the result independent of thread count
    let mean = nearest.iter().sum::<f64>() / nearest.len() as f64;
    Ok(if mean > 0.0 { 1.0 / mean } else { f64::INFINITY })
}

fn cosine(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    dot / (na * nb)
}

/// Mean cosine similarity of each selected sample to its `k` most similar
/// pool members (itself excluded; ties to the smaller index).
pub fn representativeness(selected: &[usize], embeddings: &Matrix<f32>, k: usize) -> Result<Vec<f64>> {
    let n = embeddings.rows();
    if k == 0 || n <= k {
        return Err(Error::InvalidParam(format!(
            "representativeness needs more than {k} pool samples, have {n}"
        )));
    }
    let norms: Vec<f64> = embeddings
        .iter_rows()
        .map(|r| r.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroVector(i));
    }
    selected
        .par_iter()
        .map(|&x| {
            if x >= n {
                return Err(Error::IndexOutOfRange { index: x, n });
            }
            let z = embeddings.row(x);
            let mut sims: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != x)
                .map(|j| (j, cosine(z, embeddings.row(j), norms[x], norms[j])))
                .collect();
            let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
            sims.select_nth_unstable_by(k - 1, cmp);
            sims.truncate(k);
            sims.sort_by(cmp);
            Ok(sims.iter().map(|s| s.1).sum::<f64>() / k as f64)
        })
        .collect()
}

/// All four metrics. `reference` defaults to the gold-label frequencies of
/// the whole pool.
pub fn selection_report(
    selected: &[usize],
    embeddings: &Matrix<f32>,
    gold_labels: &[u32],
    c: usize,
    reference: Option<&[f64]>,
    embedding_source: &str,
) -> Result<SelectionReport> {
    let labels: Vec<u32> = selected.iter().map(|&i| gold_labels[i]).collect();
    let pool_freqs;
    let reference = match reference {
        Some(r) => r,
        None => {
            pool_freqs = label_frequencies(gold_labels, c);
            &pool_freqs
        }
    };
    let k = REPRESENTATIVENESS_K.min(embeddings.rows().saturating_sub(1));
    let repr = representativeness(selected, embeddings, k)?;
    Ok(SelectionReport {
        imb: imbalance(&labels, c),
        ldd: label_divergence(&labels, reference),
        diversity: diversity(selected, embeddings)?,
        representativeness_mean: repr.iter().sum::<f64>() / repr.len() as f64,
        representativeness: repr,
        embedding_source: embedding_source.to_string(),
    })
}
