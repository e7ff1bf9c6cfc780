//! Prompt pseudo-label calibration.
//!
//! Label words are not equally likely a priori, so raw mask-position
//! probabilities are divided by a contextual prior estimated on a
//! high-confidence support set and renormalized. The entropy of the
//! calibrated distribution is the per-sample uncertainty.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::{DatasetMatrices, PriorSource};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied to every prior entry so calibration never divides by zero.
pub const PRIOR_FLOOR: f64 = 1e-12;

/// The `k` most confident samples per class and their deduplicated union.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportSet {
    pub per_class: Vec<Vec<usize>>,
    /// First-seen order over `per_class` concatenated class by class.
    pub union: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorVector {
    pub prior: Vec<f64>,
    pub source: PriorSource,
}

/// Calibrated pseudo-label distributions, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedLabels {
    pub probs: Matrix<f64>,
}

pub fn build_support_set(data: &DatasetMatrices, k_support: usize) -> Result<SupportSet> {
    if k_support == 0 {
        return Err(Error::InvalidParam("k_support must be at least 1".into()));
    }
    let probs = data.class_probs();
    let n = probs.rows();
    let k = k_support.min(n);
    let per_class: Vec<Vec<usize>> = (0..probs.cols())
        .map(|class| {
            // descending probability, then ascending index
            let cmp = |a: &usize, b: &usize| -> Ordering {
                probs
                    .get(*b, class)
                    .total_cmp(&probs.get(*a, class))
                    .then(a.cmp(b))
            };
            let mut idx: Vec<usize> = (0..n).collect();
            if k < n {
                idx.select_nth_unstable_by(k - 1, cmp);
                idx.truncate(k);
            }
            idx.sort_by(cmp);
            idx
        })
        .collect();

    let mut seen = vec![false; n];
    let mut union = Vec::new();
    for &i in per_class.iter().flatten() {
        if !seen[i] {
            seen[i] = true;
            union.push(i);
        }
    }
    Ok(SupportSet { per_class, union })
}

/// Mean label-word probability over the support set, floored at [`PRIOR_FLOOR`].
///
/// Vocabulary-level probabilities are averaged when the dataset carries them;
/// otherwise the normalized class probabilities stand in.
pub fn contextual_prior(data: &DatasetMatrices, support: &SupportSet) -> Result<PriorVector> {
    if support.union.is_empty() {
        return Err(Error::InvalidParam("support set is empty".into()));
    }
    let (source, m) = match data.raw_label_probs() {
        Some(raw) => (PriorSource::RawLabelProbs, raw),
        None => (PriorSource::ClassProbs, data.class_probs()),
    };
    let mut prior = vec![0.0f64; m.cols()];
    for &i in &support.union {
        for (acc, &v) in prior.iter_mut().zip(m.row(i)) {
            *acc += v as f64;
        }
    }
    let count = support.union.len() as f64;
    for p in &mut prior {
        *p = (*p / count).max(PRIOR_FLOOR);
    }
    Ok(PriorVector { prior, source })
}

pub fn calibrate(data: &DatasetMatrices, prior: &PriorVector) -> Result<CalibratedLabels> {
    calibrate_rows(data.class_probs(), &prior.prior)
}

/// Divides each row by the prior and renormalizes; works on any row source.
pub fn calibrate_rows<T>(probs: &Matrix<T>, prior: &[f64]) -> Result<CalibratedLabels>
where
    T: Copy + Into<f64> + Sync,
{
    let c = probs.cols();
    assert_eq!(prior.len(), c, "prior length must match class count");
    if let Some(p) = prior.iter().find(|p| p.is_nan() || **p <= 0.0) {
        return Err(Error::InvalidParam(format!("prior entries must be positive, got {p}")));
    }
    let rows: Vec<Vec<f64>> = (0..probs.rows())
        .into_par_iter()
        .map(|i| {
            let mut r: Vec<f64> = probs
                .row(i)
                .iter()
                .zip(prior)
                .map(|(&p, &q)| p.into() / q)
                .collect();
            let total: f64 = r.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::DegenerateRow(i));
            }
            for v in &mut r {
                *v /= total;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    Ok(CalibratedLabels {
        probs: Matrix::from_vec(probs.rows(), c, rows.concat()),
    })
}

/// Shannon entropy (natural log) of a distribution, with `0 ln 0 = 0`.
pub fn row_entropy(row: &[f64]) -> f64 {
    -row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub fn entropy(labels: &CalibratedLabels) -> Vec<f64> {
    labels.probs.iter_rows().map(row_entropy).collect()
}

/// Support set, prior, calibration and entropy in one call.
pub fn raw_uncertainty(data: &DatasetMatrices, k_support: usize) -> Result<(Vec<f64>, PriorVector)> {
    let support = build_support_set(data, k_support)?;
    let prior = contextual_prior(data, &support)?;
    let labels = calibrate(data, &prior)?;
    Ok((entropy(&labels), prior))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[&[f32]]) -> DatasetMatrices {
        let n = rows.len();
        DatasetMatrices::new(
            Matrix::from_vec(n, 1, (0..n).map(|i| i as f32).collect()),
            Matrix::from_rows(rows),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn support_set_top1() {
        let d = data(&[&[0.9, 0.1], &[0.2, 0.8], &[0.6, 0.4]]);
        let s = build_support_set(&d, 1).unwrap();
        assert_eq!(s.per_class, vec![vec![0], vec![1]]);
        assert_eq!(s.union, vec![0, 1]);
    }

    #[test]
    fn support_set_full_sort() {
        let d = data(&[&[0.9, 0.1], &[0.2, 0.8], &[0.6, 0.4]]);
        let s = build_support_set(&d, 3).unwrap();
        assert_eq!(s.per_class, vec![vec![0, 2, 1], vec![1, 2, 0]]);
        assert_eq!(s.union, vec![0, 2, 1]);
    }

    #[test]
    fn support_set_ties_prefer_low_index() {
        let d = data(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        let s = build_support_set(&d, 2).unwrap();
        assert_eq!(s.per_class, vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(s.union, vec![0, 1]);
    }

    #[test]
    fn prior_is_mean_over_union() {
        let d = data(&[&[0.9, 0.1], &[0.5, 0.5]]);
        let s = SupportSet {
            per_class: vec![vec![0], vec![1]],
            union: vec![0, 1],
        };
        let p = contextual_prior(&d, &s).unwrap();
        assert_eq!(p.source, PriorSource::ClassProbs);
        assert!((p.prior[0] - 0.7).abs() < 1e-7);
        assert!((p.prior[1] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn prior_floor_applies() {
        let d = data(&[&[1.0, 0.0]]);
        let s = SupportSet {
            per_class: vec![vec![0], vec![0]],
            union: vec![0],
        };
        let p = contextual_prior(&d, &s).unwrap();
        assert_eq!(p.prior, vec![1.0, 1e-12]);
    }

    #[test]
    fn prior_prefers_raw_label_probs() {
        let d = DatasetMatrices::new(
            Matrix::from_vec(1, 1, vec![0.0]),
            Matrix::from_rows(&[[0.5f32, 0.5]]),
            Some(Matrix::from_rows(&[[0.25f32, 0.0625]])),
            None,
        )
        .unwrap();
        let s = build_support_set(&d, 1).unwrap();
        let p = contextual_prior(&d, &s).unwrap();
        assert_eq!(p.source, PriorSource::RawLabelProbs);
        assert_eq!(p.prior, vec![0.25, 0.0625]);
    }

    #[test]
    fn uniform_prior_is_identity() {
        let m = Matrix::from_rows(&[[0.8f64, 0.2]]);
        let out = calibrate_rows(&m, &[0.5, 0.5]).unwrap();
        assert!((out.probs.get(0, 0) - 0.8).abs() < 1e-12);
        assert!((out.probs.get(0, 1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn prior_equal_to_row_gives_uniform() {
        let m = Matrix::from_rows(&[[0.8f64, 0.2]]);
        let out = calibrate_rows(&m, &[0.8, 0.2]).unwrap();
        assert!((out.probs.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn calibration_against_rational_oracle() {
        // (0.6/0.2, 0.4/0.8) = (3, 1/2) -> (6/7, 1/7)
        let m = Matrix::from_rows(&[[0.6f64, 0.4]]);
        let out = calibrate_rows(&m, &[0.2, 0.8]).unwrap();
        assert!((out.probs.get(0, 0) - 6.0 / 7.0).abs() < 1e-12);
        assert!((out.probs.get(0, 1) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_row() {
        let m = Matrix::from_rows(&[[0.5f64, 0.5], [0.0, 0.0]]);
        assert!(matches!(calibrate_rows(&m, &[0.5, 0.5]), Err(Error::DegenerateRow(1))));
    }

    #[test]
    fn entropy_values() {
        assert_eq!(row_entropy(&[1.0, 0.0]), 0.0);
        assert!((row_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        // -0.9 ln 0.9 - 0.1 ln 0.1
        assert!((row_entropy(&[0.9, 0.1]) - 0.325_082_973_391_448_2).abs() < 1e-12);
    }
}
