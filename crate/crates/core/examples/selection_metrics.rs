//! Quality report for a selection against random picks of the same size.

use std::error::Error;

use patron::metrics::selection_report;
use patron::pipeline::run_selection;
use patron::synth::{generate, SynthSpec};
use patron::HyperParams;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut data = generate(&SynthSpec::new(800, 16, 4, 21))?;
    data.normalize_embeddings();
    let gold = data.gold_labels().expect("synthetic data is labeled");
    let params = HyperParams::new(16, 50, 0.1, 1.0, 0.3).with_seed(2);

    let picked = run_selection(&data, &params, &[], None)?.state.selected;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let random = sample(&mut rng, data.n(), params.budget).into_vec();

    for (name, sel) in [("selection", &picked), ("random", &random)] {
        let r = selection_report(sel, data.embeddings(), gold, data.c(), None, "normalized")?;
        println!(
            "{name:>9}: imb {:.2}  ldd {:.4}  diversity {:.3}  representativeness {:.3}",
            r.imb, r.ldd, r.diversity, r.representativeness_mean
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
