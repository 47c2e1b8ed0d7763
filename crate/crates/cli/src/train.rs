//! The training loop shared by `train` and `experiment`.
//!
//! Both modes draw batch composition from the `batch` stream and noise
//! from the `epsilon` stream of the run seed, so two runs with the same
//! seed are bit-identical. The cnn baseline draws uniform batches and
//! never computes latent statistics; dbvae refreshes a latent-density
//! sampling distribution on the configured epoch schedule and draws
//! batches from it (rare-latent samples get up-weighted).

use dbvae_core::adam::Adam;
use dbvae_core::data::{stratified_indices, Dataset, CATEGORY_NAMES, NUM_CATEGORIES};
use dbvae_core::error::Result;
use dbvae_core::metrics::{balanced_accuracy, confusion_matrix, standard_accuracy, RunRecord};
use dbvae_core::model::{save_checkpoint, DbVae, Mode};
use dbvae_core::resampler::{density_weights, SamplingDistribution};
use dbvae_core::rng::{seeded_rng, stream};
use dbvae_core::Tensor;
use rand::Rng;

use crate::config::RunConfig;
use crate::rundir::{atomic_write, RunDir};

/// Images per forward chunk during full-dataset passes (latent
/// statistics, validation sweeps). Bounds activation memory.
const INFERENCE_CHUNK: usize = 128;

/// What a finished run hands back to the experiment harness.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// Per-category validation recall, canonical category order.
    pub per_category: Vec<f64>,
    /// Standard (samples-level) validation accuracy.
    pub standard: f64,
    /// Balanced (categories-level) validation accuracy.
    pub balanced: f64,
    /// Per-category rows for `per_run.csv` / `metrics.csv`.
    pub records: Vec<RunRecord>,
}

/// Latent means of every image, computed in bounded chunks.
pub fn latent_mu_chunked(model: &DbVae<f32>, data: &Dataset) -> Result<Tensor<f32>> {
    let latent = model.config().latent_dim;
    let mut rows = Vec::with_capacity(data.len() * latent);
    let mut start = 0;
    while start < data.len() {
        let end = (start + INFERENCE_CHUNK).min(data.len());
        let indices: Vec<usize> = (start..end).collect();
        let (images, _) = data.gather(&indices);
        let mu = model.latent_mu(&images)?;
        rows.extend_from_slice(mu.data());
        start = end;
    }
    Tensor::new(vec![data.len(), latent], rows)
}

/// Predictions for every image, computed in bounded chunks.
pub fn predict_chunked(model: &DbVae<f32>, data: &Dataset) -> Result<Vec<usize>> {
    let mut predictions = Vec::with_capacity(data.len());
    let mut start = 0;
    while start < data.len() {
        let end = (start + INFERENCE_CHUNK).min(data.len());
        let indices: Vec<usize> = (start..end).collect();
        let (images, _) = data.gather(&indices);
        predictions.extend(model.predict(&images)?);
        start = end;
    }
    Ok(predictions)
}

/// FNV-1a digest of an index list; logged so two runs' splits can be
/// compared from their logs alone.
pub fn index_digest(indices: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn per_category_counts(labels: &[usize]) -> [usize; NUM_CATEGORIES] {
    let mut counts = [0usize; NUM_CATEGORIES];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Train one model on `dataset` per `config`, write the four run
/// artifacts into `config.out`, and return the validation metrics.
pub fn run_training(config: &RunConfig, dataset: &Dataset, run_id: usize) -> Result<RunArtifacts> {
    config.validate()?;
    let run_dir = RunDir::create(&config.out)?;
    let mut log = String::new();

    // Split: depends only on labels, fraction and seed — two models with
    // the same seed train on the identical partition.
    let (train_idx, val_idx) = stratified_indices(dataset.labels(), config.val_fraction, config.seed)?;
    let train_set = dataset.subset(&train_idx);
    let val_set = dataset.subset(&val_idx);
    let train_counts = per_category_counts(train_set.labels());
    let val_counts = per_category_counts(val_set.labels());
    log.push_str(&format!(
        "run mode={} seed={} epochs={} batch={}\n",
        config.mode, config.seed, config.epochs, config.batch
    ));
    log.push_str(&format!(
        "split seed={} fraction={} val_counts={} digest={:016x}\n",
        config.seed,
        config.val_fraction,
        val_counts.map(|c| c.to_string()).join(","),
        index_digest(&val_idx)
    ));

    // Model, optimizer and streams, all derived from the run seed.
    let mut model = DbVae::<f32>::new(config.model_config(), &mut seeded_rng(config.seed, stream::INIT))?;
    let mut adam = Adam::new(config.adam, &model.params())?;
    let mut batch_rng = seeded_rng(config.seed, stream::BATCH);
    let mut eps_rng = seeded_rng(config.seed, stream::EPSILON);

    let steps_per_epoch = train_set.len().div_ceil(config.batch);
    let schedule = config.schedule();
    let mut distribution: Option<SamplingDistribution> = None;

    for epoch in 0..config.epochs {
        if config.mode == Mode::Dbvae && schedule.refreshes_at(epoch) {
            let mu = latent_mu_chunked(&model, &train_set)?;
            let weights = density_weights(&mu, &config.resampler)?;
            distribution = Some(SamplingDistribution::new(&weights)?);
        }

        let mut sums = [0.0f64; 4]; // total, classification, reconstruction, kl
        for _ in 0..steps_per_epoch {
            let indices: Vec<usize> = match &distribution {
                Some(dist) => dist.draw_batch(&mut batch_rng, config.batch),
                None => (0..config.batch)
                    .map(|_| batch_rng.random_range(0..train_set.len()))
                    .collect(),
            };
            let (images, labels) = train_set.gather(&indices);
            let breakdown = model.train_step(&mut adam, &images, &labels, &mut eps_rng)?;
            sums[0] += breakdown.total;
            sums[1] += breakdown.classification;
            sums[2] += breakdown.reconstruction;
            sums[3] += breakdown.kl;
        }

        let n = steps_per_epoch as f64;
        let mut line = format!(
            "epoch={} steps={} loss={:.6} ce={:.6} rec={:.6} kl={:.6}",
            epoch,
            steps_per_epoch,
            sums[0] / n,
            sums[1] / n,
            sums[2] / n,
            sums[3] / n
        );
        if let Some(dist) = &distribution {
            line.push_str(&format!(" entropy={:.6}", dist.entropy()));
        }
        line.push('\n');
        log.push_str(&line);
    }

    // Validation sweep.
    let predictions = predict_chunked(&model, &val_set)?;
    let cm = confusion_matrix(&predictions, val_set.labels(), NUM_CATEGORIES)?;
    let per_category = cm.per_category_accuracy()?;
    let standard = standard_accuracy(&cm)?;
    let balanced = balanced_accuracy(&cm)?;
    log.push_str(&format!(
        "final standard={:.6} balanced={:.6}\n",
        standard, balanced
    ));

    let records: Vec<RunRecord> = (0..NUM_CATEGORIES)
        .map(|cat| RunRecord {
            run_id,
            model: config.mode.to_string(),
            category: CATEGORY_NAMES[cat].to_string(),
            n_train: train_counts[cat],
            n_val: val_counts[cat],
            correct: cm.count(cat, cat),
            total: cm.row_sum(cat),
            accuracy: per_category[cat],
        })
        .collect();

    // Persist the four artifacts (config first so a partially written
    // run is still identifiable, checkpoint via its own atomic path).
    atomic_write(&run_dir.config_path(), config.render().as_bytes())?;
    save_checkpoint(run_dir.checkpoint_path(), &model, &adam, config.seed)?;
    atomic_write(
        &run_dir.metrics_path(),
        dbvae_core::metrics::render_per_run_csv(&records).as_bytes(),
    )?;
    atomic_write(&run_dir.log_path(), log.as_bytes())?;

    Ok(RunArtifacts {
        per_category,
        standard,
        balanced,
        records,
    })
}
