//! End-to-end selection on a synthetic pool through the same entry point the
//! `select` subcommand uses.

use std::error::Error;

use patron::pipeline::{cmd_select, RunConfig};
use patron::synth::{write_synthetic, SynthSpec};
use patron::HyperParams;

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let manifest = write_synthetic(&SynthSpec::new(400, 16, 4, 3), dir.path(), "pool")?;

    let params = HyperParams::new(8, 20, 0.1, 1.0, 0.3).with_seed(7);
    let mut config = RunConfig::new(&manifest, params);
    config.normalize_embeddings = true;
    config.output = Some(dir.path().join("selection.toml"));

    let out = cmd_select(&config)?;
    println!("selected {:?}", out.selected);
    println!("rewrite rounds: {}, converged: {}", out.iterations_run, out.converged);
    if let Some(m) = &out.metrics {
        println!("imb {:.3}  ldd {:.4}  diversity {:.3}", m.imb, m.ldd, m.diversity);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
