//! End-to-end orchestration: calibrate, propagate, partition and rewrite,
//! plus the multi-round variant and the metrics report.
//!
//! Every failure carries the [`Stage`] it came from. The stage commands
//! (`calibrate`, `propagate`) write an [`UncertaintyFile`] that `select`
//! accepts in place of recomputing those stages; the chained result is
//! identical to a single `select` run because the file stores f64 values
//! in shortest round-trip form.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::raw_uncertainty;
use crate::dataset::{
    load_dataset, read_selection, read_toml, write_selection, write_toml, ClusterPick, ConfigEcho,
    DatasetMatrices, PriorSource, SelectionOutput,
};
use crate::error::Error;
use crate::metrics::{selection_report, SelectionReport};
use crate::params::{HyperParams, Sweep};
use crate::partition::{kmeans_pool, Partition, SelectionState};
use crate::propagation::{knn_graph, propagate, UncertaintyVectors};
use crate::rewrite::run_ptr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Calibrate,
    Propagate,
    Partition,
    Rewrite,
    Metrics,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Calibrate => "calibrate",
            Stage::Propagate => "propagate",
            Stage::Partition => "partition",
            Stage::Rewrite => "rewrite",
            Stage::Metrics => "metrics",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl PipelineError {
    /// 2 for validation failures, 3 for computation failures.
    pub fn exit_code(&self) -> i32 {
        if self.source.is_validation() {
            2
        } else {
            3
        }
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> PipelineResult<T>;
}

impl<T> AtStage<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> PipelineResult<T> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

/// Per-dataset defaults for the parameters that have no universal value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub k_support: usize,
    pub rho: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    HyperParams::DEFAULT_MARGIN
}

/// Names accepted by [`builtin_preset`].
pub const PRESET_NAMES: [&str; 6] = ["imdb", "yelp-full", "agnews", "yahoo", "dbpedia", "trec"];

pub fn builtin_preset(name: &str) -> Option<Preset> {
    let (k_support, rho, gamma, beta) = match name {
        "imdb" => (1000, 0.05, 0.3, 0.5),
        "yelp-full" => (1000, 0.1, 0.3, 5.0),
        "agnews" => (1000, 0.1, 0.5, 0.5),
        "yahoo" => (1000, 0.1, 0.3, 1.0),
        "dbpedia" => (1000, 0.1, 0.1, 5.0),
        "trec" => (50, 0.1, 0.3, 5.0),
        _ => return None,
    };
    Some(Preset {
        k_support,
        rho,
        beta,
        gamma,
        margin: HyperParams::DEFAULT_MARGIN,
    })
}

/// A built-in preset name, or a path to a TOML file with the [`Preset`] fields.
pub fn load_preset(name_or_path: &str) -> Result<Preset, Error> {
    if let Some(p) = builtin_preset(name_or_path) {
        return Ok(p);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return read_toml(path);
    }
    Err(Error::InvalidParam(format!(
        "unknown preset \"{name_or_path}\" (built-in: {})",
        PRESET_NAMES.join(", ")
    )))
}

/// Parameter values given explicitly; anything unset falls back to the
/// preset, then to the fixed defaults.
#[derive(Clone, Debug, Default)]
pub struct ParamOverrides {
    pub budget: Option<usize>,
    pub k_support: Option<usize>,
    pub knn_size: Option<usize>,
    pub cknn_size: Option<usize>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub margin: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub jacobi: bool,
}

impl ParamOverrides {
    pub fn resolve(&self, preset: Option<&Preset>) -> Result<HyperParams, Error> {
        let missing = |name: &str| {
            Error::InvalidParam(format!("--{name} is required (or supply --preset)"))
        };
        let budget = self.budget.ok_or_else(|| missing("budget"))?;
        let k_support = self
            .k_support
            .or(preset.map(|p| p.k_support))
            .ok_or_else(|| missing("k-support"))?;
        let rho = self.rho.or(preset.map(|p| p.rho)).ok_or_else(|| missing("rho"))?;
        let beta = self.beta.or(preset.map(|p| p.beta)).ok_or_else(|| missing("beta"))?;
        let gamma = self.gamma.or(preset.map(|p| p.gamma)).ok_or_else(|| missing("gamma"))?;
        Ok(HyperParams {
            k_support,
            knn_size: self.knn_size.unwrap_or(HyperParams::DEFAULT_KNN),
            cknn_size: self.cknn_size.unwrap_or(HyperParams::DEFAULT_CKNN),
            rho,
            beta,
            gamma,
            margin: self
                .margin
                .or(preset.map(|p| p.margin))
                .unwrap_or(HyperParams::DEFAULT_MARGIN),
            iterations: self.iterations.unwrap_or(HyperParams::DEFAULT_ITERATIONS),
            budget,
            seed: self.seed.unwrap_or(0),
            sweep: if self.jacobi { Sweep::Jacobi } else { Sweep::GaussSeidel },
        })
    }
}

/// Fully resolved invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output: Option<PathBuf>,
    pub params: HyperParams,
    pub normalize_embeddings: bool,
    pub labeled_pool: Option<PathBuf>,
    pub reference_freqs: Option<PathBuf>,
    /// Stage file with precomputed (propagated) uncertainties.
    pub uncertainty: Option<PathBuf>,
    pub preset: Option<String>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, params: HyperParams) -> Self {
        Self {
            manifest: manifest.into(),
            output: None,
            params,
            normalize_embeddings: false,
            labeled_pool: None,
            reference_freqs: None,
            uncertainty: None,
            preset: None,
        }
    }

    fn echo(&self) -> ConfigEcho {
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        ConfigEcho {
            manifest: self.manifest.display().to_string(),
            normalize_embeddings: self.normalize_embeddings,
            preset: self.preset.clone(),
            labeled_pool: show(&self.labeled_pool),
            reference_freqs: show(&self.reference_freqs),
            uncertainty: show(&self.uncertainty),
            params: self.params.clone(),
        }
    }

    fn load(&self) -> PipelineResult<DatasetMatrices> {
        let mut data = load_dataset(&self.manifest).at(Stage::Load)?;
        if self.normalize_embeddings {
            data.normalize_embeddings();
        }
        Ok(data)
    }

    fn embedding_source(&self) -> String {
        if self.normalize_embeddings {
            "manifest embeddings, L2-normalized".into()
        } else {
            "manifest embeddings".into()
        }
    }
}

/// Output of the `calibrate` and `propagate` stage commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyFile {
    pub n: usize,
    pub k_support: usize,
    pub prior_source: PriorSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_size: Option<usize>,
    pub normalize_embeddings: bool,
    pub prior: Vec<f64>,
    pub raw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagated: Option<Vec<f64>>,
}

impl UncertaintyFile {
    pub fn read(path: &Path) -> crate::error::Result<Self> {
        read_toml(path)
    }

    pub fn write(&self, path: &Path) -> crate::error::Result<()> {
        write_toml(path, self)
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn calibrate_stage(data: &DatasetMatrices, config: &RunConfig) -> PipelineResult<UncertaintyFile> {
    let (raw, prior) = raw_uncertainty(data, config.params.k_support).at(Stage::Calibrate)?;
    Ok(UncertaintyFile {
        n: data.n(),
        k_support: config.params.k_support,
        prior_source: prior.source,
        rho: None,
        knn_size: None,
        normalize_embeddings: config.normalize_embeddings,
        prior: prior.prior,
        raw,
        propagated: None,
    })
}

fn propagate_stage(data: &DatasetMatrices, config: &RunConfig, mut file: UncertaintyFile) -> PipelineResult<UncertaintyFile> {
    let graph = knn_graph(data.embeddings(), config.params.knn_size).at(Stage::Propagate)?;
    let unc = propagate(&file.raw, &graph, config.params.rho).at(Stage::Propagate)?;
    file.rho = Some(config.params.rho);
    file.knn_size = Some(config.params.knn_size);
    file.normalize_embeddings = config.normalize_embeddings;
    file.propagated = Some(unc.propagated);
    Ok(file)
}

/// `calibrate` stage command: per-sample entropy of calibrated pseudo-labels.
pub fn cmd_calibrate(config: &RunConfig) -> PipelineResult<UncertaintyFile> {
    let data = config.load()?;
    let file = calibrate_stage(&data, config)?;
    if let Some(out) = &config.output {
        file.write(out).at(Stage::Write)?;
    }
    Ok(file)
}

/// `propagate` stage command. Reads raw uncertainty from `config.uncertainty`
/// when given, otherwise calibrates first.
pub fn cmd_propagate(config: &RunConfig) -> PipelineResult<UncertaintyFile> {
    let data = config.load()?;
    let file = match &config.uncertainty {
        Some(path) => {
            let f = UncertaintyFile::read(path).at(Stage::Load)?;
            check_stage_file(&f, &data, config, false)?;
            f
        }
        None => calibrate_stage(&data, config)?,
    };
    let file = propagate_stage(&data, config, file)?;
    if let Some(out) = &config.output {
        file.write(out).at(Stage::Write)?;
    }
    Ok(file)
}

fn check_stage_file(f: &UncertaintyFile, data: &DatasetMatrices, config: &RunConfig, need_propagated: bool) -> PipelineResult<()> {
    let fail = |msg: String| Err(Error::InvalidParam(msg)).at(Stage::Load);
    if f.n != data.n() || f.raw.len() != data.n() {
        return fail(format!("uncertainty file covers {} samples, dataset has {}", f.raw.len(), data.n()));
    }
    if f.k_support != config.params.k_support {
        return fail(format!(
            "uncertainty file built with k_support {}, run uses {}",
            f.k_support, config.params.k_support
        ));
    }
    if need_propagated {
        match &f.propagated {
            Some(p) if p.len() == data.n() => {}
            _ => return fail("uncertainty file has no propagated values".into()),
        }
        if f.rho != Some(config.params.rho)
            || f.knn_size != Some(config.params.knn_size)
            || f.normalize_embeddings != config.normalize_embeddings
        {
            return fail("uncertainty file was propagated with different rho, knn or normalization".into());
        }
    }
    Ok(())
}

/// Indices of a labeled-pool file: whitespace-separated integers, `#` comments.
pub fn read_index_file(path: &Path, n: usize) -> crate::error::Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for token in text.lines().flat_map(|l| l.split('#').next().unwrap_or("").split_whitespace()) {
        let index: usize = token
            .parse()
            .map_err(|_| Error::LabeledPoolInvalid(format!("not an index: \"{token}\"")))?;
        if index >= n {
            return Err(Error::LabeledPoolInvalid(format!("index {index} outside [0, {n})")));
        }
        if !seen.insert(index) {
            return Err(Error::LabeledPoolInvalid(format!("duplicate index {index}")));
        }
        out.push(index);
    }
    Ok(out)
}

/// Reference class frequencies: `c` whitespace-separated non-negative numbers summing to 1.
pub fn read_reference_freqs(path: &Path, c: usize) -> crate::error::Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let freqs = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidParam(format!("not a frequency: \"{t}\"")))
        })
        .collect::<crate::error::Result<Vec<f64>>>()?;
    if freqs.len() != c {
        return Err(Error::InvalidParam(format!("{} reference frequencies for {c} classes", freqs.len())));
    }
    let sum: f64 = freqs.iter().sum();
    if freqs.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParam(format!("reference frequencies must be non-negative and sum to 1 (sum {sum})")));
    }
    Ok(freqs)
}

/// Everything a selection run produces before serialization.
#[derive(Clone, Debug)]
pub struct SelectionRun {
    pub uncertainty: UncertaintyVectors,
    pub prior_source: PriorSource,
    pub partition: Partition,
    pub state: SelectionState,
}

/// Calibrate, propagate, partition and rewrite over `data` minus `labeled`.
///
/// Stages run on the unlabeled pool only; labeled samples enter solely
/// through the cross-cluster neighbour pool of the rewrite step.
pub fn run_selection(
    data: &DatasetMatrices,
    params: &HyperParams,
    labeled: &[usize],
    precomputed: Option<(UncertaintyVectors, PriorSource)>,
) -> PipelineResult<SelectionRun> {
    params.validate(usize::MAX).at(Stage::Config)?;
    let n = data.n();
    let labeled_set: HashSet<usize> = labeled.iter().copied().collect();
    let pool: Vec<usize> = (0..n).filter(|i| !labeled_set.contains(i)).collect();
    if params.budget > pool.len() {
        return Err(Error::BudgetExceedsPool {
            budget: params.budget,
            pool: pool.len(),
        })
        .at(Stage::Partition);
    }

    let (uncertainty, prior_source) = match precomputed {
        Some(p) => p,
        None => {
            let sub_storage;
            let sub = if labeled.is_empty() {
                data
            } else {
                sub_storage = data.subset(&pool);
                &sub_storage
            };
            let (raw, prior) = raw_uncertainty(sub, params.k_support).at(Stage::Calibrate)?;
            let graph = knn_graph(sub.embeddings(), params.knn_size).at(Stage::Propagate)?;
            let local = propagate(&raw, &graph, params.rho).at(Stage::Propagate)?;
            let unc = if labeled.is_empty() {
                local
            } else {
                let mut global = UncertaintyVectors {
                    raw: vec![0.0; n],
                    propagated: vec![0.0; n],
                };
                for (l, &g) in pool.iter().enumerate() {
                    global.raw[g] = local.raw[l];
                    global.propagated[g] = local.propagated[l];
                }
                global
            };
            (unc, prior.source)
        }
    };

    let partition = kmeans_pool(data.embeddings(), &pool, params.budget, params.seed).at(Stage::Partition)?;
    let state = run_ptr(data.embeddings(), &partition, &uncertainty, params, labeled).at(Stage::Rewrite)?;
    Ok(SelectionRun {
        uncertainty,
        prior_source,
        partition,
        state,
    })
}

fn finish(config: &RunConfig, data: &DatasetMatrices, run: SelectionRun) -> PipelineResult<SelectionOutput> {
    let selected = run.state.selected.clone();
    let metrics = match data.gold_labels() {
        Some(gold) => {
            let reference = config
                .reference_freqs
                .as_ref()
                .map(|p| read_reference_freqs(p, data.c()))
                .transpose()
                .at(Stage::Metrics)?;
            Some(
                selection_report(
                    &selected,
                    data.embeddings(),
                    gold,
                    data.c(),
                    reference.as_deref(),
                    &config.embedding_source(),
                )
                .at(Stage::Metrics)?,
            )
        }
        None => None,
    };
    let out = SelectionOutput {
        per_cluster: selected
            .iter()
            .enumerate()
            .map(|(cluster, &index)| ClusterPick { cluster, index })
            .collect(),
        selected,
        iterations_run: run.state.iterations_run,
        converged: run.state.converged,
        prior_source: run.prior_source,
        objective_trace: run.state.objective_trace,
        config_echo: config.echo(),
        metrics,
    };
    if let Some(path) = &config.output {
        write_selection(&out, path).at(Stage::Write)?;
    }
    Ok(out)
}

/// Single-round selection. Uses `config.uncertainty` when set.
pub fn cmd_select(config: &RunConfig) -> PipelineResult<SelectionOutput> {
    params_ok(config)?;
    let data = config.load()?;
    let precomputed = match &config.uncertainty {
        Some(path) => {
            let f = UncertaintyFile::read(path).at(Stage::Load)?;
            check_stage_file(&f, &data, config, true)?;
            let unc = UncertaintyVectors {
                raw: f.raw,
                propagated: f.propagated.expect("checked above"),
            };
            Some((unc, f.prior_source))
        }
        None => None,
    };
    let run = run_selection(&data, &config.params, &[], precomputed)?;
    finish(config, &data, run)
}

/// Multi-round selection: `config.labeled_pool` lists already-labeled samples.
pub fn cmd_round(config: &RunConfig) -> PipelineResult<SelectionOutput> {
    params_ok(config)?;
    let path = config
        .labeled_pool
        .as_ref()
        .ok_or_else(|| Error::LabeledPoolInvalid("--labeled-pool is required for round".into()))
        .at(Stage::Config)?;
    let data = config.load()?;
    let labeled = read_index_file(path, data.n()).at(Stage::Load)?;
    let run = run_selection(&data, &config.params, &labeled, None)?;
    finish(config, &data, run)
}

/// Recomputes the report for an existing selection file.
pub fn cmd_metrics(config: &RunConfig, selection_path: &Path) -> PipelineResult<SelectionReport> {
    let data = config.load()?;
    let selection = read_selection(selection_path).at(Stage::Load)?;
    selection.validate_for(data.n()).at(Stage::Load)?;
    let gold = data.gold_labels().ok_or(Error::MissingLabels).at(Stage::Metrics)?;
    let reference = config
        .reference_freqs
        .as_ref()
        .map(|p| read_reference_freqs(p, data.c()))
        .transpose()
        .at(Stage::Metrics)?;
    let report = selection_report(
        &selection.selected,
        data.embeddings(),
        gold,
        data.c(),
        reference.as_deref(),
        &config.embedding_source(),
    )
    .at(Stage::Metrics)?;
    if let Some(out) = &config.output {
        write_toml(out, &report).at(Stage::Write)?;
    }
    Ok(report)
}

fn params_ok(config: &RunConfig) -> PipelineResult<()> {
    config.params.validate(usize::MAX).at(Stage::Config)
}
