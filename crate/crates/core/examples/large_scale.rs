//! Full pipeline on a large synthetic pool, timed per stage.
//!
//! `cargo run --release --example large_scale -- 100000 768 128`

use std::time::Instant;

use patron::pipeline::run_selection;
use patron::synth::{generate, SynthSpec};
use patron::HyperParams;

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

fn main() {
    let (n, d, b) = (arg(1, 20_000), arg(2, 128), arg(3, 32));
    let start = Instant::now();
    let mut data = generate(&SynthSpec::new(n, d, 10, 1)).expect("generate");
    data.normalize_embeddings();
    println!("generated n={n} d={d} in {:.1?}", start.elapsed());

    let params = HyperParams::new(b, 1000.min(n), 0.1, 1.0, 0.3).with_seed(7);
    let start = Instant::now();
    let run = run_selection(&data, &params, &[], None).expect("selection");
    println!(
        "selected {} samples in {:.1?} ({} rewrite rounds)",
        run.state.selected.len(),
        start.elapsed(),
        run.state.iterations_run
    );
}
