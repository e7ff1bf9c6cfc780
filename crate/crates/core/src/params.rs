use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order in which clusters are re-solved during a rewrite round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// Ascending cluster index; later clusters see earlier updates.
    #[default]
    GaussSeidel,
    /// Every cluster is re-solved against the previous round's selections.
    Jacobi,
}

/// Every tunable of the selection pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Top-k samples per class forming the calibration support set.
    pub k_support: usize,
    /// Neighbours used for uncertainty propagation.
    pub knn_size: usize,
    /// Neighbours among the selected set used by the rewrite penalty.
    pub cknn_size: usize,
    /// RBF kernel width.
    pub rho: f64,
    /// Weight of the distance-to-centroid term.
    pub beta: f64,
    /// Weight of the cross-cluster margin penalty.
    pub gamma: f64,
    pub margin: f64,
    /// Maximum rewrite rounds.
    pub iterations: usize,
    /// Number of samples to select (and of clusters).
    pub budget: usize,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Sweep,
}

impl HyperParams {
    pub const DEFAULT_KNN: usize = 50;
    pub const DEFAULT_CKNN: usize = 10;
    pub const DEFAULT_MARGIN: f64 = 0.5;
    pub const DEFAULT_ITERATIONS: usize = 2;

    /// Parameters with the fixed defaults filled in; `rho`, `beta`, `gamma`
    /// and `k_support` have no universal default and must be chosen.
    pub fn new(budget: usize, k_support: usize, rho: f64, beta: f64, gamma: f64) -> Self {
        Self {
            k_support,
            knn_size: Self::DEFAULT_KNN,
            cknn_size: Self::DEFAULT_CKNN,
            rho,
            beta,
            gamma,
            margin: Self::DEFAULT_MARGIN,
            iterations: Self::DEFAULT_ITERATIONS,
            budget,
            seed: 0,
            sweep: Sweep::GaussSeidel,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks the parameter invariants against a pool of `pool` samples.
    pub fn validate(&self, pool: usize) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidParam("budget must be at least 1".into()));
        }
        if self.budget > pool {
            return Err(Error::BudgetExceedsPool {
                budget: self.budget,
                pool,
            });
        }
        for (name, v) in [
            ("k_support", self.k_support),
            ("knn_size", self.knn_size),
            ("cknn_size", self.cknn_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidParam(format!("{name} must be at least 1")));
            }
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::InvalidParam(format!("rho must be positive, got {}", self.rho)));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("margin", self.margin)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// TOML integers are signed 64-bit; seeds above `i64::MAX` are written as strings.
mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(serde::de::Error::custom),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
