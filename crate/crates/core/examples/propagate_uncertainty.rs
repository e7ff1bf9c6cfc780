//! Raw uncertainty smoothed over the kNN graph for several kernel widths.

use std::error::Error;

use patron::calibration::raw_uncertainty;
use patron::propagation::{knn_graph, propagate};
use patron::synth::{generate, SynthSpec};

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut data = generate(&SynthSpec::new(300, 8, 3, 11))?;
    data.normalize_embeddings();
    let (raw, _) = raw_uncertainty(&data, 30)?;
    let graph = knn_graph(data.embeddings(), 20)?;

    for rho in [0.01, 0.1, 1.0, 10.0] {
        let unc = propagate(&raw, &graph, rho)?;
        let mean = unc.propagated.iter().sum::<f64>() / unc.propagated.len() as f64;
        let top = (0..raw.len())
            .max_by(|&a, &b| unc.propagated[a].total_cmp(&unc.propagated[b]))
            .unwrap_or(0);
        println!("rho {rho:>5}: mean {mean:.4}, most uncertain sample {top}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
