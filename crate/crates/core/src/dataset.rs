//! Interchange format: a TOML manifest pointing at headerless little-endian
//! f32 row-major matrices, plus the TOML selection output.
//!
//! ```toml
//! n = 1000
//! d = 768
//! c = 4
//! dtype = "f32le"
//! layout = "row-major"
//! embedding_path = "embeddings.bin"
//! prob_path = "class_probs.bin"
//! raw_prob_path = "raw_label_probs.bin"   # optional
//! labels_path = "labels.bin"              # optional, u32 little-endian
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::SelectionReport;
use crate::params::HyperParams;

/// Allowed deviation of a class-probability row sum from 1.
pub const PROB_ROW_TOLERANCE: f64 = 1e-5;

pub const DTYPE: &str = "f32le";
pub const LAYOUT: &str = "row-major";

/// The engine's input: embeddings and pseudo-label probabilities per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMatrices {
    embeddings: Matrix<f32>,
    class_probs: Matrix<f32>,
    raw_label_probs: Option<Matrix<f32>>,
    gold_labels: Option<Vec<u32>>,
}

impl DatasetMatrices {
    /// Validates shapes and value ranges. Probabilities are kept exactly as given.
    pub fn new(
        embeddings: Matrix<f32>,
        class_probs: Matrix<f32>,
        raw_label_probs: Option<Matrix<f32>>,
        gold_labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = embeddings.rows();
        let c = class_probs.cols();
        if n == 0 {
            return Err(Error::InvalidManifest("n must be at least 1".into()));
        }
        if embeddings.cols() == 0 {
            return Err(Error::InvalidManifest("d must be at least 1".into()));
        }
        if c < 2 {
            return Err(Error::InvalidManifest("c must be at least 2".into()));
        }
        if class_probs.rows() != n {
            return Err(Error::InvalidManifest(format!(
                "class_probs has {} rows, embeddings {}",
                class_probs.rows(),
                n
            )));
        }
        for (row, e) in embeddings.iter_rows().enumerate() {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "embeddings", row });
            }
        }
        for (row, p) in class_probs.iter_rows().enumerate() {
            let sum: f64 = p.iter().map(|&v| v as f64).sum();
            let min = p.iter().fold(f64::INFINITY, |m, &v| m.min(v as f64));
            // NaN fails both comparisons
            if !((sum - 1.0).abs() <= PROB_ROW_TOLERANCE && min >= 0.0) {
                return Err(Error::ProbRowInvalid { row, sum, min });
            }
        }
        if let Some(raw) = &raw_label_probs {
            if raw.rows() != n || raw.cols() != c {
                return Err(Error::InvalidManifest("raw_label_probs shape differs from class_probs".into()));
            }
            for (row, r) in raw.iter_rows().enumerate() {
                if let Some(col) = r.iter().position(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::RawProbInvalid { row, col, value: r[col] });
                }
            }
        }
        if let Some(labels) = &gold_labels {
            if labels.len() != n {
                return Err(Error::InvalidManifest(format!(
                    "{} gold labels for {} samples",
                    labels.len(),
                    n
                )));
            }
            if let Some(row) = labels.iter().position(|&l| l as usize >= c) {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: labels[row],
                    classes: c,
                });
            }
        }
        Ok(Self {
            embeddings,
            class_probs,
            raw_label_probs,
            gold_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn d(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn c(&self) -> usize {
        self.class_probs.cols()
    }

    pub fn embeddings(&self) -> &Matrix<f32> {
        &self.embeddings
    }

    pub fn class_probs(&self) -> &Matrix<f32> {
        &self.class_probs
    }

    pub fn raw_label_probs(&self) -> Option<&Matrix<f32>> {
        self.raw_label_probs.as_ref()
    }

    pub fn gold_labels(&self) -> Option<&[u32]> {
        self.gold_labels.as_deref()
    }

    /// Rows `indices` of every matrix, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            embeddings: self.embeddings.select_rows(indices),
            class_probs: self.class_probs.select_rows(indices),
            raw_label_probs: self.raw_label_probs.as_ref().map(|m| m.select_rows(indices)),
            gold_labels: self
                .gold_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Scales every embedding row to unit L2 norm; zero rows are left as is.
    pub fn normalize_embeddings(&mut self) {
        for i in 0..self.embeddings.rows() {
            let row = self.embeddings.row_mut(i);
            let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
    }
}

/// Shape and file metadata for a dataset on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub dtype: String,
    pub layout: String,
    pub embedding_path: PathBuf,
    pub prob_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_prob_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    /// Free-form identity of the encoder that produced the embeddings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.dtype != DTYPE {
            return Err(Error::InvalidManifest(format!(
                "dtype must be \"{DTYPE}\", got \"{}\"",
                manifest.dtype
            )));
        }
        if manifest.layout != LAYOUT {
            return Err(Error::InvalidManifest(format!(
                "layout must be \"{LAYOUT}\", got \"{}\"",
                manifest.layout
            )));
        }
        Ok(manifest)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_exact_len(path: &Path, expected: u64) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn read_f32_matrix(path: &Path, rows: usize, cols: usize) -> Result<Matrix<f32>> {
    let bytes = read_exact_len(path, (rows * cols * 4) as u64)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

fn read_u32_vec(path: &Path, len: usize) -> Result<Vec<u32>> {
    let bytes = read_exact_len(path, (len * 4) as u64)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Loads and validates the dataset described by a manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<DatasetMatrices> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let (n, d, c) = (manifest.n, manifest.d, manifest.c);
    if n == 0 || d == 0 || c < 2 {
        return Err(Error::InvalidManifest(format!(
            "need n >= 1, d >= 1, c >= 2; got n={n}, d={d}, c={c}"
        )));
    }
    let embeddings = read_f32_matrix(&resolve(base, &manifest.embedding_path), n, d)?;
    let class_probs = read_f32_matrix(&resolve(base, &manifest.prob_path), n, c)?;
    let raw = manifest
        .raw_prob_path
        .as_ref()
        .map(|p| read_f32_matrix(&resolve(base, p), n, c))
        .transpose()?;
    let labels = manifest
        .labels_path
        .as_ref()
        .map(|p| read_u32_vec(&resolve(base, p), n))
        .transpose()?;
    DatasetMatrices::new(embeddings, class_probs, raw, labels)
}

/// Writes `data` as `<stem>.embeddings.bin` etc. next to `<stem>.toml` in
/// `dir` and returns the manifest path.
pub fn write_dataset(data: &DatasetMatrices, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = |suffix: &str| PathBuf::from(format!("{stem}.{suffix}"));
    let mut manifest = Manifest {
        n: data.n(),
        d: data.d(),
        c: data.c(),
        dtype: DTYPE.into(),
        layout: LAYOUT.into(),
        embedding_path: file("embeddings.bin"),
        prob_path: file("class_probs.bin"),
        raw_prob_path: None,
        labels_path: None,
        encoder: None,
    };
    write_bytes(&dir.join(&manifest.embedding_path), &f32_bytes(data.embeddings.as_slice()))?;
    write_bytes(&dir.join(&manifest.prob_path), &f32_bytes(data.class_probs.as_slice()))?;
    if let Some(raw) = &data.raw_label_probs {
        let p = file("raw_label_probs.bin");
        write_bytes(&dir.join(&p), &f32_bytes(raw.as_slice()))?;
        manifest.raw_prob_path = Some(p);
    }
    if let Some(labels) = &data.gold_labels {
        let p = file("labels.bin");
        let bytes: Vec<u8> = labels.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_bytes(&dir.join(&p), &bytes)?;
        manifest.labels_path = Some(p);
    }
    let path = dir.join(format!("{stem}.toml"));
    write_toml(&path, &manifest)?;
    Ok(path)
}

pub(crate) fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_bytes(path, text.as_bytes())
}

pub(crate) fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Where the calibration prior was averaged from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// Vocabulary-level label-word probabilities.
    RawLabelProbs,
    /// Label-set-normalized class probabilities (fallback).
    ClassProbs,
}

/// Resolved run configuration echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub manifest: String,
    pub normalize_embeddings: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_pool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_freqs: Option<String>,
    /// Set when uncertainties were read from a stage file instead of computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<String>,
    pub params: HyperParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPick {
    pub cluster: usize,
    pub index: usize,
}

/// Final selection with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutput {
    /// Global sample indices, one per cluster in cluster order.
    pub selected: Vec<usize>,
    pub iterations_run: usize,
    pub converged: bool,
    pub prior_source: PriorSource,
    pub objective_trace: Vec<f64>,
    pub per_cluster: Vec<ClusterPick>,
    pub config_echo: ConfigEcho,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<SelectionReport>,
}

impl SelectionOutput {
    pub fn validate(&self) -> Result<()> {
        if self.selected.is_empty() || self.config_echo.params.budget == 0 {
            return Err(Error::InvalidParam("budget must be at least 1".into()));
        }
        if self.selected.len() != self.config_echo.params.budget {
            return Err(Error::InvalidParam(format!(
                "{} selected indices for budget {}",
                self.selected.len(),
                self.config_echo.params.budget
            )));
        }
        let mut seen = HashSet::with_capacity(self.selected.len());
        for &i in &self.selected {
            if !seen.insert(i) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(())
    }

    /// Additionally checks that every index lies in `[0, n)`.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        match self.selected.iter().find(|&&i| i >= n) {
            Some(&index) => Err(Error::IndexOutOfRange { index, n }),
            None => Ok(()),
        }
    }
}

pub fn write_selection(out: &SelectionOutput, path: &Path) -> Result<()> {
    out.validate()?;
    write_toml(path, out)
}

pub fn read_selection(path: &Path) -> Result<SelectionOutput> {
    let out: SelectionOutput = read_toml(path)?;
    out.validate()?;
    Ok(out)
}
