//! Cold-start data selection over precomputed embeddings and prompt
//! pseudo-label probabilities.
//!
//! The pipeline scores every unlabeled sample by the entropy of its
//! calibrated pseudo-label distribution, smooths that score over the kNN
//! graph of the embeddings with an RBF kernel, partitions the pool with
//! K-Means into one cluster per annotation, picks the best-scoring sample of
//! each cluster and then repeatedly re-picks under a margin penalty that
//! keeps selections in neighbouring clusters apart.
//!
//! ```no_run
//! use patron::{pipeline, HyperParams, RunConfig};
//!
//! let params = HyperParams::new(16, 100, 0.1, 1.0, 0.3).with_seed(7);
//! let out = pipeline::cmd_select(&RunConfig::new("data/manifest.toml", params)).unwrap();
//! println!("{:?}", out.selected);
//! ```
//!
//! Modules map onto the stages: [`calibration`], [`propagation`],
//! [`partition`], [`rewrite`], with [`metrics`] for diagnostics, [`dataset`]
//! for the on-disk format and [`synth`] for reproducible test data.

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod metrics;
mod neighbors;
pub mod params;
pub mod partition;
pub mod pipeline;
pub mod propagation;
pub mod rewrite;
pub mod synth;

pub use dataset::{load_dataset, read_selection, write_dataset, write_selection, DatasetMatrices, SelectionOutput};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use params::{HyperParams, Sweep};
pub use pipeline::RunConfig;
