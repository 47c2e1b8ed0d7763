//! Scratch probe: per-category sampling mass under a trained checkpoint.

use std::path::PathBuf;

use dbvae_cli::RunConfig;
use dbvae_core::data::{load_dataset, stratified_indices, CATEGORY_NAMES};
use dbvae_core::model::load_checkpoint;
use dbvae_core::resampler::density_weights;
use dbvae_core::Tensor;

fn main() {
    let run: PathBuf = std::env::args().nth(1).expect("usage: resample_probe RUN_DIR").into();
    let config = RunConfig::load(&run.join("config.txt")).unwrap();
    let (model, _, _) = load_checkpoint(&run.join("checkpoint.ckpt")).unwrap();
    let data = load_dataset(&config.data).unwrap();
    let (train_idx, _) = stratified_indices(data.labels(), config.val_fraction, config.seed).unwrap();
    let train = data.subset(&train_idx);

    let mu: Tensor<f32> = dbvae_cli::train::latent_mu_chunked(&model, &train).unwrap();
    let weights = density_weights(&mu, &config.resampler).unwrap();

    let mut mass = [0.0f64; 8];
    let mut count = [0usize; 8];
    for (i, &label) in train.labels().iter().enumerate() {
        mass[label] += weights[i];
        count[label] += 1;
    }
    println!("{:<12} {:>6} {:>10} {:>10} {:>8}", "category", "n", "mass", "uniform", "boost");
    for (k, name) in CATEGORY_NAMES.iter().enumerate() {
        let uniform = count[k] as f64 / train.len() as f64;
        println!(
            "{name:<12} {:>6} {:>10.5} {:>10.5} {:>8.2}",
            count[k],
            mass[k],
            uniform,
            mass[k] / uniform
        );
    }
    let entropy: f64 = weights.iter().filter(|w| **w > 0.0).map(|w| -w * w.ln()).sum();
    println!("entropy {entropy:.4} (uniform {:.4})", (train.len() as f64).ln());
}
