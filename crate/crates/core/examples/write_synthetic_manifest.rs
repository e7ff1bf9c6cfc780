//! Writes a synthetic dataset to disk and loads it back through the manifest.

use std::error::Error;

use patron::load_dataset;
use patron::synth::{write_synthetic, SynthSpec};

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec {
        raw_label_probs: true,
        label_noise: 0.25,
        ..SynthSpec::new(1000, 32, 6, 99)
    };
    let manifest = write_synthetic(&spec, dir.path(), "synthetic")?;
    println!("{}", std::fs::read_to_string(&manifest)?);

    let data = load_dataset(&manifest)?;
    println!(
        "loaded n={} d={} c={} raw label probs: {}",
        data.n(),
        data.d(),
        data.c(),
        data.raw_label_probs().is_some()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
