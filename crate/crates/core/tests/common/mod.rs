#![allow(dead_code)]

use patron::synth::{generate, SynthSpec};
use patron::{DatasetMatrices, HyperParams, Matrix};

use crate::oracle;

pub fn rows(m: &Matrix<f32>) -> Vec<Vec<f32>> {
    m.iter_rows().map(<[f32]>::to_vec).collect()
}

pub fn oracle_params(p: &HyperParams) -> oracle::Params {
    oracle::Params {
        k_support: p.k_support,
        knn: p.knn_size,
        cknn: p.cknn_size,
        rho: p.rho,
        beta: p.beta,
        gamma: p.gamma,
        margin: p.margin,
        iterations: p.iterations,
        budget: p.budget,
        seed: p.seed,
        jacobi: p.sweep == patron::Sweep::Jacobi,
    }
}

pub fn oracle_select(data: &DatasetMatrices, p: &HyperParams, labeled: &[usize]) -> oracle::Outcome {
    let raw = data.raw_label_probs().map(rows);
    oracle::select(
        &rows(data.embeddings()),
        &rows(data.class_probs()),
        raw.as_deref(),
        labeled,
        &oracle_params(p),
    )
}

/// Two Gaussian blobs with noisy pseudo-labels.
pub fn mixture(n: usize, d: usize, c: usize, separation: f64, seed: u64) -> DatasetMatrices {
    generate(&SynthSpec {
        cluster_separation: separation,
        label_noise: 0.2,
        ..SynthSpec::new(n, d, c, seed)
    })
    .unwrap()
}
