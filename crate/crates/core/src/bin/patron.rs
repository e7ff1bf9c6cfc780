use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patron::pipeline::{
    cmd_calibrate, cmd_metrics, cmd_propagate, cmd_round, cmd_select, load_preset, with_threads,
    ParamOverrides, PipelineError, RunConfig, Stage,
};

#[derive(Parser)]
#[command(name = "patron", version, about = "Cold-start data selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full single-round selection
    Select(Flags),
    /// Multi-round selection avoiding an already-labeled pool
    Round(Flags),
    /// Calibrated entropy per sample
    Calibrate(Flags),
    /// Propagated uncertainty per sample
    Propagate(Flags),
    /// Quality report for an existing selection
    Metrics {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        selection: PathBuf,
    },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "k-support")]
    k_support: Option<usize>,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    cknn: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// L2-normalize embeddings before any distance computation
    #[arg(long)]
    normalize: bool,
    /// Simultaneous instead of sequential cluster updates
    #[arg(long)]
    jacobi: bool,
    #[arg(long = "labeled-pool")]
    labeled_pool: Option<PathBuf>,
    #[arg(long = "reference-freqs")]
    reference_freqs: Option<PathBuf>,
    /// Built-in preset name or path to a preset TOML file
    #[arg(long)]
    preset: Option<String>,
    /// Precomputed uncertainty stage file
    #[arg(long)]
    uncertainty: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Select,
    Round,
    Calibrate,
    Propagate,
    Metrics,
}

impl Flags {
    fn config(&self, kind: Kind) -> Result<RunConfig, PipelineError> {
        let at_config = |source| PipelineError { stage: Stage::Config, source };
        let preset = self.preset.as_deref().map(load_preset).transpose().map_err(at_config)?;
        let mut overrides = ParamOverrides {
            budget: self.budget,
            k_support: self.k_support,
            knn_size: self.knn,
            cknn_size: self.cknn,
            rho: self.rho,
            beta: self.beta,
            gamma: self.gamma,
            margin: self.margin,
            iterations: self.iterations,
            seed: self.seed,
            jacobi: self.jacobi,
        };
        // stage commands never read the selection knobs; placeholders keep validation uniform
        if !matches!(kind, Kind::Select | Kind::Round) {
            overrides.budget.get_or_insert(1);
            overrides.beta.get_or_insert(0.0);
            overrides.gamma.get_or_insert(0.0);
        }
        if matches!(kind, Kind::Calibrate | Kind::Metrics) {
            overrides.rho.get_or_insert(1.0);
        }
        if kind == Kind::Metrics {
            overrides.k_support.get_or_insert(1);
        }
        let params = overrides.resolve(preset.as_ref()).map_err(at_config)?;
        params.validate(usize::MAX).map_err(at_config)?;
        Ok(RunConfig {
            manifest: self.manifest.clone(),
            output: self.out.clone(),
            params,
            normalize_embeddings: self.normalize,
            labeled_pool: self.labeled_pool.clone(),
            reference_freqs: self.reference_freqs.clone(),
            uncertainty: self.uncertainty.clone(),
            preset: self.preset.clone(),
        })
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (flags, kind) = match &cli.command {
        Command::Select(f) => (f, Kind::Select),
        Command::Round(f) => (f, Kind::Round),
        Command::Calibrate(f) => (f, Kind::Calibrate),
        Command::Propagate(f) => (f, Kind::Propagate),
        Command::Metrics { flags, .. } => (flags, Kind::Metrics),
    };
    let config = flags.config(kind)?;
    let outcome = with_threads(flags.threads, || -> Result<String, PipelineError> {
        Ok(match &cli.command {
            Command::Select(_) => summary(&cmd_select(&config)?),
            Command::Round(_) => summary(&cmd_round(&config)?),
            Command::Calibrate(_) => format!("calibrated {} samples", cmd_calibrate(&config)?.n),
            Command::Propagate(_) => format!("propagated {} samples", cmd_propagate(&config)?.n),
            Command::Metrics { selection, .. } => {
                toml::to_string(&cmd_metrics(&config, selection)?).unwrap_or_default()
            }
        })
    })
    .map_err(|source| PipelineError { stage: Stage::Config, source })??;
    println!("{outcome}");
    Ok(())
}

fn summary(out: &patron::SelectionOutput) -> String {
    format!(
        "selected {} samples in {} rewrite round(s){}: {:?}",
        out.selected.len(),
        out.iterations_run,
        if out.converged { ", converged" } else { "" },
        out.selected
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
