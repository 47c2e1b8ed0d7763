//! End-to-end model behaviour: gradient correctness on the full composite
//! loss, loss bookkeeping against independent Monte-Carlo estimates, mode
//! equivalence, training determinism, divergence reporting, and checkpoint
//! round-trips.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dbvae_core::adam::{Adam, AdamConfig};
use dbvae_core::model::{
    check_model_gradient, load_checkpoint, reparameterize, save_checkpoint, DbVae, LossWeights,
    Mode, ModelConfig, MODEL_FD_STEP,
};
use dbvae_core::ops;
use dbvae_core::rng::{seeded_rng, stream};
use dbvae_core::{Error, Tensor};

/// Worst acceptable relative error for the full-model finite-difference
/// check. The composite loss mixes ReLU/sigmoid nonlinearities and three
/// loss terms, so the linear-map tolerance does not apply; 1e-4 leaves two
/// orders of magnitude above the f64 central-difference noise floor.
const FULL_MODEL_TOL: f64 = 1e-4;

/// Tolerance for Monte-Carlo estimates (≥ 4·10^5 draws ⇒ s.e. ≲ 2e-3).
const MC_TOL: f64 = 1e-2;

fn miniature(mode: Mode) -> ModelConfig {
    ModelConfig {
        mode,
        image_side: 8,
        channels: 1,
        num_categories: 3,
        latent_dim: 4,
        encoder_filters: vec![2, 4],
        dense_width: 16,
        weights: LossWeights::default(),
    }
}

fn random_batch(
    rng: &mut ChaCha8Rng,
    n: usize,
    side: usize,
    categories: usize,
) -> (Tensor<f32>, Vec<usize>) {
    let mut images = Tensor::zeros(vec![n, 1, side, side]);
    for v in images.data_mut().iter_mut() {
        *v = rng.random_range(0.0..1.0);
    }
    let labels = (0..n).map(|i| i % categories).collect();
    (images, labels)
}

fn params_bits(model: &DbVae<f32>) -> Vec<u32> {
    model
        .params()
        .iter()
        .flat_map(|p| p.data().iter().map(|v| v.to_bits()))
        .collect()
}

fn train_toy(config: ModelConfig, seed: u64, steps: usize) -> (DbVae<f32>, f64) {
    let mut init = seeded_rng(seed, stream::INIT);
    let mut model = DbVae::new(config.clone(), &mut init).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &model.params()).unwrap();
    let mut eps_rng = seeded_rng(seed, stream::EPSILON);
    let mut batch_rng = seeded_rng(seed, stream::BATCH);
    let mut last = f64::NAN;
    for _ in 0..steps {
        let (images, labels) = random_batch(&mut batch_rng, 6, config.image_side, 3);
        let breakdown = model
            .train_step(&mut adam, &images, &labels, &mut eps_rng)
            .unwrap();
        last = breakdown.total;
    }
    (model, last)
}

// ───────────────────────── gradient correctness ─────────────────────────

#[test]
fn full_dbvae_gradient_matches_finite_differences() {
    // The production KL weight (5e-4) shrinks the logvar-head gradients
    // to ~1e-8, where f64 central differences bottom out on roundoff.
    // The seam wiring under test is independent of the weight values, so
    // the check runs with weights that keep every branch's gradients
    // comfortably above the finite-difference noise floor.
    let mut config = miniature(Mode::Dbvae);
    config.weights = LossWeights {
        classification: 1.0,
        vae: 1.0,
        reconstruction: 1.0,
        kl: 0.5,
    };
    for seed in [5, 7, 8] {
        let report = check_model_gradient(&config, 3, seed).unwrap();
        // The reconstruction loss is piecewise linear; the comparison is
        // only meaningful when every |xhat − x| kink clears the probe
        // window by a wide margin. These seeds do — by construction of the
        // fixed rng streams, that cannot regress.
        let gap = report.min_reconstruction_gap.expect("VAE branch is active");
        assert!(
            gap > 1e3 * MODEL_FD_STEP,
            "seed {seed}: reconstruction gap {gap:.3e} too close to a kink for finite differences"
        );
        assert!(
            report.max_rel_err < FULL_MODEL_TOL,
            "seed {seed}: max relative error {:.3e} >= {FULL_MODEL_TOL:.0e}",
            report.max_rel_err
        );
    }
}

#[test]
fn full_cnn_gradient_matches_finite_differences() {
    let report = check_model_gradient(&miniature(Mode::Cnn), 3, 3).unwrap();
    assert!(report.min_reconstruction_gap.is_none());
    assert!(
        report.max_rel_err < FULL_MODEL_TOL,
        "max relative error {:.3e} >= {FULL_MODEL_TOL:.0e}",
        report.max_rel_err
    );
}

#[test]
fn gradient_check_refuses_full_scale_models() {
    let err = check_model_gradient(&ModelConfig::new(Mode::Dbvae), 2, 1).unwrap_err();
    assert!(matches!(err, Error::CheckTooLarge { .. }));
}

// ───────────────────────── loss bookkeeping ─────────────────────────────

#[test]
fn total_loss_is_the_weighted_component_sum() {
    let mut config = miniature(Mode::Dbvae);
    config.weights = LossWeights {
        classification: 0.7,
        vae: 0.9,
        reconstruction: 1.3,
        kl: 0.02,
    };
    let mut rng = seeded_rng(5, stream::INIT);
    let model: DbVae<f32> = DbVae::new(config, &mut rng).unwrap();
    let (images, labels) = random_batch(&mut rng, 4, 8, 3);
    let mut eps = Tensor::zeros(vec![4, 4]);
    for v in eps.data_mut().iter_mut() {
        *v = rng.random_range(-2.0f32..2.0);
    }
    let (b, _) = model.loss_and_grads(&images, &labels, Some(&eps)).unwrap();
    let expected = 0.7 * b.classification + 0.9 * (1.3 * b.reconstruction + 0.02 * b.kl);
    assert!(
        (b.total - expected).abs() < 1e-12,
        "total {} != weighted sum {expected}",
        b.total
    );
    assert!(b.classification > 0.0 && b.reconstruction > 0.0 && b.kl >= 0.0);
}

/// The closed-form KL must agree with a Monte-Carlo estimate of
/// `E[log q(z) − log p(z)]` under `z = mu + sigma·eps`. Per draw the
/// difference telescopes to `0.5·Σ_d (z_d² − logvar_d − eps_d²)`.
#[test]
fn kl_closed_form_matches_monte_carlo() {
    let mu = Tensor::new(vec![1, 2], vec![0.8f64, -0.4]).unwrap();
    let logvar = Tensor::new(vec![1, 2], vec![0.5f64, -1.0]).unwrap();
    let (closed, _, _) = ops::kl_standard_normal(&mu, &logvar).unwrap();

    let mut rng = seeded_rng(99, stream::EPSILON);
    let draws = 400_000;
    let mut acc = 0.0f64;
    for _ in 0..draws {
        let mut eps = Tensor::<f64>::zeros(vec![1, 2]);
        for v in eps.data_mut().iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let z = reparameterize(&mu, &logvar, &eps).unwrap();
        for d in 0..2 {
            acc += 0.5 * (z.data()[d].powi(2) - logvar.data()[d] - eps.data()[d].powi(2));
        }
    }
    let mc = acc / draws as f64;
    assert!(
        (mc - closed).abs() < MC_TOL,
        "Monte-Carlo {mc:.5} vs closed form {closed:.5}"
    );
}

/// Reparameterized samples must empirically carry the requested moments.
#[test]
fn reparameterization_has_requested_moments() {
    let mu = Tensor::filled(vec![1, 1], 1.5f64);
    let logvar = Tensor::filled(vec![1, 1], (0.49f64).ln());
    let mut rng = seeded_rng(7, stream::EPSILON);
    let draws = 400_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let mut eps = Tensor::<f64>::zeros(vec![1, 1]);
        eps.data_mut()[0] = rng.sample::<f64, _>(rand_distr::StandardNormal);
        let z = reparameterize(&mu, &logvar, &eps).unwrap().data()[0];
        sum += z;
        sum_sq += z * z;
    }
    let mean = sum / draws as f64;
    let var = sum_sq / draws as f64 - mean * mean;
    assert!((mean - 1.5).abs() < MC_TOL, "sample mean {mean}");
    assert!((var - 0.49).abs() < MC_TOL, "sample variance {var}");
}

// ───────────────────────── determinism and modes ────────────────────────

#[test]
fn training_is_bitwise_deterministic_in_the_seed() {
    let (a, loss_a) = train_toy(miniature(Mode::Dbvae), 42, 8);
    let (b, loss_b) = train_toy(miniature(Mode::Dbvae), 42, 8);
    let (c, _) = train_toy(miniature(Mode::Dbvae), 43, 8);
    assert_eq!(params_bits(&a), params_bits(&b));
    assert_eq!(loss_a.to_bits(), loss_b.to_bits());
    assert_ne!(params_bits(&a), params_bits(&c));
}

/// `cnn` mode and `dbvae` mode with the VAE weight forced to zero must
/// take bit-identical trajectories: the inert branch is skipped outright,
/// so it can neither perturb arithmetic nor consume random numbers.
#[test]
fn zero_weight_dbvae_is_bitwise_equal_to_cnn() {
    let mut zeroed = miniature(Mode::Dbvae);
    zeroed.weights.vae = 0.0;
    let (dbvae, dbvae_loss) = train_toy(zeroed, 7, 8);
    let (cnn, cnn_loss) = train_toy(miniature(Mode::Cnn), 7, 8);
    // Identical parameter trajectories…
    assert_eq!(params_bits(&dbvae), params_bits(&cnn));
    assert_eq!(dbvae_loss.to_bits(), cnn_loss.to_bits());
    // …and identical predictions.
    let mut rng = seeded_rng(8, stream::BATCH);
    let (images, _) = random_batch(&mut rng, 5, 8, 3);
    assert_eq!(
        dbvae.predict(&images).unwrap(),
        cnn.predict(&images).unwrap()
    );
}

#[test]
fn toy_problem_is_overfit_within_budget() {
    // Nine fixed images, three per category, each category with its own
    // brightness band. A healthy training loop drives the cross-entropy
    // on this memorization task under 0.1 well within 400 steps.
    let config = miniature(Mode::Cnn);
    let mut init = seeded_rng(21, stream::INIT);
    let mut model: DbVae<f32> = DbVae::new(config, &mut init).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &model.params()).unwrap();
    let mut eps_rng = seeded_rng(21, stream::EPSILON);

    let mut images = Tensor::zeros(vec![9, 1, 8, 8]);
    let mut pattern_rng = seeded_rng(21, stream::BATCH);
    let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
    for (i, chunk) in images.data_mut().chunks_mut(64).enumerate() {
        let base = 0.15 + 0.3 * (i % 3) as f32;
        for v in chunk.iter_mut() {
            *v = base + pattern_rng.random_range(0.0..0.1);
        }
    }

    let mut ce = f64::NAN;
    for _ in 0..400 {
        ce = model
            .train_step(&mut adam, &images, &labels, &mut eps_rng)
            .unwrap()
            .classification;
        if ce < 0.05 {
            break;
        }
    }
    assert!(ce < 0.1, "cross-entropy stayed at {ce:.4} after 400 steps");
    assert_eq!(model.predict(&images).unwrap(), labels);
}

#[test]
fn non_finite_parameters_surface_as_numeric_divergence() {
    let mut init = seeded_rng(31, stream::INIT);
    let mut model: DbVae<f32> = DbVae::new(miniature(Mode::Dbvae), &mut init).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &model.params()).unwrap();
    // Poison the classifier head: its logits feed the loss directly.
    // (A poisoned conv weight would be masked by downstream ReLUs, whose
    // `x > 0` comparison maps NaN to zero.)
    let names = model.param_names();
    for (name, p) in names.iter().zip(model.params_mut()) {
        if name == "head.logits.0.weight" {
            p.data_mut()[0] = f32::NAN;
        }
    }
    let mut eps_rng = seeded_rng(31, stream::EPSILON);
    let images = Tensor::filled(vec![2, 1, 8, 8], 0.5f32);
    let err = model
        .train_step(&mut adam, &images, &[0, 1], &mut eps_rng)
        .unwrap_err();
    assert!(err.is_numeric(), "expected numeric divergence, got {err}");
}

// ───────────────────────── checkpointing ────────────────────────────────

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.ckpt");
    let second = dir.path().join("second.ckpt");

    let (model, _) = train_toy(miniature(Mode::Dbvae), 13, 5);
    // Reconstruct the optimizer state the run ended with.
    let replay = {
        let mut init = seeded_rng(13, stream::INIT);
        let mut m = DbVae::<f32>::new(miniature(Mode::Dbvae), &mut init).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &m.params()).unwrap();
        let mut eps_rng = seeded_rng(13, stream::EPSILON);
        let mut batch_rng = seeded_rng(13, stream::BATCH);
        for _ in 0..5 {
            let (images, labels) = random_batch(&mut batch_rng, 6, 8, 3);
            m.train_step(&mut adam, &images, &labels, &mut eps_rng)
                .unwrap();
        }
        (m, adam)
    };
    assert_eq!(params_bits(&replay.0), params_bits(&model));

    save_checkpoint(&first, &replay.0, &replay.1, 13).unwrap();
    let (loaded, loaded_adam, seed) = load_checkpoint(&first).unwrap();
    assert_eq!(seed, 13);
    save_checkpoint(&second, &loaded, &loaded_adam, seed).unwrap();

    let bytes_first = std::fs::read(&first).unwrap();
    let bytes_second = std::fs::read(&second).unwrap();
    assert_eq!(bytes_first, bytes_second, "round-trip changed the file");

    // The loaded model behaves identically, not just structurally.
    let mut rng = seeded_rng(14, stream::BATCH);
    let (images, labels) = random_batch(&mut rng, 4, 8, 3);
    assert_eq!(
        loaded.predict(&images).unwrap(),
        replay.0.predict(&images).unwrap()
    );
    let eps = Tensor::filled(vec![4, 4], 0.3f32);
    let (b_orig, g_orig) = replay
        .0
        .loss_and_grads(&images, &labels, Some(&eps))
        .unwrap();
    let (b_load, g_load) = loaded.loss_and_grads(&images, &labels, Some(&eps)).unwrap();
    assert_eq!(b_orig.total.to_bits(), b_load.total.to_bits());
    for (a, b) in g_orig.iter().zip(&g_load) {
        assert_eq!(a.data(), b.data());
    }

    // Resumed training continues bitwise-identically to uninterrupted
    // training when fed the same noise stream.
    let (mut continued, mut continued_adam) = replay;
    let (mut resumed, mut resumed_adam, _) = load_checkpoint(&first).unwrap();
    let mut eps_a = seeded_rng(15, stream::EPSILON);
    let mut eps_b = eps_a.clone();
    let mut batch_rng = seeded_rng(15, stream::BATCH);
    for _ in 0..3 {
        let (images, labels) = random_batch(&mut batch_rng, 6, 8, 3);
        continued
            .train_step(&mut continued_adam, &images, &labels, &mut eps_a)
            .unwrap();
        resumed
            .train_step(&mut resumed_adam, &images, &labels, &mut eps_b)
            .unwrap();
    }
    assert_eq!(params_bits(&continued), params_bits(&resumed));
}

#[test]
fn checkpoint_preserves_mode_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut config = miniature(Mode::Cnn);
    config.weights.kl = 0.125;
    let mut init = seeded_rng(17, stream::INIT);
    let model: DbVae<f32> = DbVae::new(config.clone(), &mut init).unwrap();
    let adam = Adam::new(AdamConfig::default(), &model.params()).unwrap();
    save_checkpoint(&path, &model, &adam, 999).unwrap();
    let (loaded, loaded_adam, seed) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.config(), &config);
    assert_eq!(seed, 999);
    assert_eq!(loaded_adam.step_count(), 0);
    assert_eq!(loaded_adam.config(), adam.config());
}

// ───────────────────────── parallel consistency ─────────────────────────

/// Gradients must be bit-identical whether the data-parallel driver is on
/// or off: both paths issue the same fixed-size chunked reductions in the
/// same order.
#[test]
fn gradients_match_bitwise_across_parallel_modes() {
    let mut init = seeded_rng(23, stream::INIT);
    let model: DbVae<f32> = DbVae::new(miniature(Mode::Dbvae), &mut init).unwrap();
    let mut rng = seeded_rng(23, stream::BATCH);
    let (images, labels) = random_batch(&mut rng, 6, 8, 3);
    let eps = Tensor::filled(vec![6, 4], -0.7f32);

    let was_parallel = dbvae_core::par::parallel_enabled();
    dbvae_core::par::set_parallel(true);
    let (b_par, g_par) = model.loss_and_grads(&images, &labels, Some(&eps)).unwrap();
    dbvae_core::par::set_parallel(false);
    let (b_seq, g_seq) = model.loss_and_grads(&images, &labels, Some(&eps)).unwrap();
    dbvae_core::par::set_parallel(was_parallel);

    assert_eq!(b_par.total.to_bits(), b_seq.total.to_bits());
    for (a, b) in g_par.iter().zip(&g_seq) {
        assert_eq!(
            a.data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
