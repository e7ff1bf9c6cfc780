//! K-means partition, greedy initialization, then rewrite rounds one by one.

use std::error::Error;

use patron::calibration::raw_uncertainty;
use patron::partition::{init_selection, kmeans};
use patron::propagation::{knn_graph, propagate};
use patron::rewrite::{cross_knn, rewrite_step, selection_objective};
use patron::synth::{generate, SynthSpec};
use patron::HyperParams;

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut data = generate(&SynthSpec::new(600, 16, 4, 5))?;
    data.normalize_embeddings();
    let emb = data.embeddings();
    let params = HyperParams::new(12, 40, 0.1, 1.0, 0.5).with_seed(1);

    let (raw, _) = raw_uncertainty(&data, params.k_support)?;
    let unc = propagate(&raw, &knn_graph(emb, params.knn_size)?, params.rho)?;
    let part = kmeans(emb, params.budget, params.seed)?;
    println!("k-means inertia per iteration: {:.2?}", part.inertia_trace());

    let mut state = init_selection(&part, &unc, emb, params.beta, &[])?;
    println!("init     {:?}", state.selected);
    for round in 1..=4 {
        let cknn = cross_knn(&state, emb, params.cknn_size, false);
        let next = rewrite_step(&state, &part, &unc, &cknn, emb, &params);
        let changed = next.selected != state.selected;
        state = next;
        let obj = selection_objective(&state, &part, &unc, emb, &params);
        println!("round {round}  {:?} objective {obj:.4}", state.selected);
        if !changed {
            break;
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
