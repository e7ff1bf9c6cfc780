//! Deterministic Gaussian-mixture datasets with planted classes and noisy
//! pseudo-labels.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::dataset::{write_dataset, DatasetMatrices};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    /// Distance of each class centre from the origin; points have unit variance.
    pub cluster_separation: f64,
    /// Fraction of rows whose pseudo-label distribution is replaced by a
    /// flat-Dirichlet draw unrelated to the sample.
    pub label_noise: f64,
    pub seed: u64,
    /// Also emit vocabulary-level label-word probabilities with a per-class
    /// frequency bias.
    pub raw_label_probs: bool,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize, c: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            c,
            cluster_separation: 4.0,
            label_noise: 0.1,
            seed,
            raw_label_probs: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.c < 2 {
            return Err(Error::InvalidParam(format!(
                "need n >= 1, d >= 1, c >= 2; got n={}, d={}, c={}",
                self.n, self.d, self.c
            )));
        }
        if !(self.cluster_separation.is_finite() && self.cluster_separation > 0.0) {
            return Err(Error::InvalidParam("cluster_separation must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::InvalidParam("label_noise must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn normalize_in_place(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Embeddings, class probabilities (softmax of negative distance to every
/// class centre) and gold labels.
pub fn generate(spec: &SynthSpec) -> Result<DatasetMatrices> {
    spec.validate()?;
    let SynthSpec { n, d, c, .. } = *spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut centers = Matrix::filled(c, d, 0.0f64);
    for k in 0..c {
        let row = centers.row_mut(k);
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row.iter_mut() {
            *v *= spec.cluster_separation / norm;
        }
    }

    let mut embeddings = Vec::with_capacity(n * d);
    let mut probs = Vec::with_capacity(n * c);
    let mut labels = Vec::with_capacity(n);
    let mut point = vec![0.0f64; d];
    let mut row = vec![0.0f64; c];
    for _ in 0..n {
        let label = rng.gen_range(0..c);
        labels.push(label as u32);
        for (p, &m) in point.iter_mut().zip(centers.row(label)) {
            let noise: f64 = rng.sample(StandardNormal);
            *p = (m + noise) as f32 as f64;
        }
        embeddings.extend(point.iter().map(|&v| v as f32));

        if rng.gen::<f64>() < spec.label_noise {
            for v in row.iter_mut() {
                *v = rng.sample(Exp1);
            }
        } else {
            let dists: Vec<f64> = (0..c)
                .map(|k| {
                    point
                        .iter()
                        .zip(centers.row(k))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let nearest = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            for (v, dist) in row.iter_mut().zip(&dists) {
                *v = (nearest - dist).exp();
            }
        }
        normalize_in_place(&mut row);
        probs.extend(row.iter().map(|&v| v as f32));
    }

    let raw = spec.raw_label_probs.then(|| {
        let bias: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..0.5)).collect();
        let data = probs
            .chunks_exact(c)
            .flat_map(|r| r.iter().zip(&bias).map(|(&p, &b)| (p as f64 * b) as f32))
            .collect();
        Matrix::from_vec(n, c, data)
    });

    DatasetMatrices::new(
        Matrix::from_vec(n, d, embeddings),
        Matrix::from_vec(n, c, probs),
        raw,
        Some(labels),
    )
}

/// Generates and writes a dataset; returns the manifest path.
pub fn write_synthetic(spec: &SynthSpec, dir: &Path, stem: &str) -> Result<PathBuf> {
    write_dataset(&generate(spec)?, dir, stem)
}
