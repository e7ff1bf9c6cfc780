//! Two selection rounds: the second avoids everything labeled in the first.

use std::error::Error;

use patron::pipeline::run_selection;
use patron::synth::{generate, SynthSpec};
use patron::HyperParams;

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut data = generate(&SynthSpec::new(500, 12, 5, 9))?;
    data.normalize_embeddings();
    let params = HyperParams::new(10, 30, 0.1, 1.0, 0.3).with_seed(4);

    let first = run_selection(&data, &params, &[], None)?;
    println!("round 1: {:?}", first.state.selected);

    let labeled = first.state.selected.clone();
    let second = run_selection(&data, &params, &labeled, None)?;
    println!("round 2: {:?}", second.state.selected);
    assert!(second.state.selected.iter().all(|q| !labeled.contains(q)));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
