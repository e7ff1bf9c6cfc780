//! Prior estimation and calibrated entropy for a handful of pseudo-label rows.

use std::error::Error;

use patron::calibration::{build_support_set, calibrate, contextual_prior, entropy};
use patron::{DatasetMatrices, Matrix};

pub fn run() -> Result<(), Box<dyn Error>> {
    // the model favours class 0 across the board
    let probs = Matrix::from_rows(&[
        [0.9f32, 0.1],
        [0.8, 0.2],
        [0.7, 0.3],
        [0.6, 0.4],
        [0.55, 0.45],
    ]);
    let data = DatasetMatrices::new(Matrix::filled(5, 1, 0.0), probs, None, None)?;

    let support = build_support_set(&data, 2)?;
    let prior = contextual_prior(&data, &support)?;
    println!("support per class: {:?}", support.per_class);
    println!("prior: {:?} (from {:?})", prior.prior, prior.source);

    let cal = calibrate(&data, &prior)?;
    for (row, h) in cal.probs.iter_rows().zip(entropy(&cal)) {
        println!("{row:.3?} entropy {h:.4}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
