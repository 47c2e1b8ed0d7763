//! Resampler behaviour against hand-computed oracles, limit cases, and
//! statistical properties of the weighted sampler.

use proptest::prelude::*;
use rand::Rng;

use dbvae_core::resampler::{
    density_weights, CombineMode, ResampleConfig, SamplingDistribution,
};
use dbvae_core::rng::{seeded_rng, stream};
use dbvae_core::Tensor;

/// Monte-Carlo frequency tolerance (1e5 draws ⇒ s.e. ≤ 1.6e-3 per cell).
const MC_TOL: f64 = 1e-2;

#[test]
fn one_dimensional_weights_match_hand_oracle() {
    // Two bins with masses 0.1 and 0.9: nine of ten samples share the
    // high bin. With alpha = 1e-3 the unnormalized boosts are
    // 1/(0.1+1e-3) and 1/(0.9+1e-3).
    let mut values = vec![0.0f64];
    values.extend(std::iter::repeat(1.0).take(9));
    let mu = Tensor::new(vec![10, 1], values).unwrap();
    let config = ResampleConfig {
        bins: 2,
        ..Default::default()
    };
    let weights = density_weights(&mu, &config).unwrap();

    let rare = 1.0 / (0.1 + 1e-3);
    let common = 1.0 / (0.9 + 1e-3);
    let total = rare + 9.0 * common;
    assert!((weights[0] - rare / total).abs() < 1e-12);
    for w in &weights[1..] {
        assert!((w - common / total).abs() < 1e-12);
    }
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn product_mode_multiplies_and_max_mode_takes_the_peak() {
    // Two dimensions, two bins each. Sample 0 is rare in both dimensions
    // (mass 0.25 each); the rest share masses 0.75.
    let mut data = vec![0.0f64, 0.0];
    for _ in 0..3 {
        data.extend([1.0, 1.0]);
    }
    let mu = Tensor::new(vec![4, 2], data).unwrap();
    let alpha = 1e-3;

    let product = density_weights(
        &mu,
        &ResampleConfig {
            bins: 2,
            alpha,
            combine: CombineMode::Product,
        },
    )
    .unwrap();
    let rare = (1.0f64 / (0.25 + alpha)).powi(2);
    let common = (1.0f64 / (0.75 + alpha)).powi(2);
    let total = rare + 3.0 * common;
    assert!((product[0] - rare / total).abs() < 1e-12);

    let max = density_weights(
        &mu,
        &ResampleConfig {
            bins: 2,
            alpha,
            combine: CombineMode::Max,
        },
    )
    .unwrap();
    let rare = 1.0f64 / (0.25 + alpha);
    let common = 1.0f64 / (0.75 + alpha);
    let total = rare + 3.0 * common;
    assert!((max[0] - rare / total).abs() < 1e-12);
}

#[test]
fn huge_alpha_flattens_weights_to_uniform() {
    let mut rng = seeded_rng(5, stream::EPSILON);
    let mut mu = Tensor::<f32>::zeros(vec![40, 3]);
    for v in mu.data_mut().iter_mut() {
        *v = rng.random_range(-2.0f32..2.0);
    }
    let config = ResampleConfig {
        alpha: 1e9,
        ..Default::default()
    };
    let weights = density_weights(&mu, &config).unwrap();
    for w in &weights {
        assert!(
            (w - 1.0 / 40.0).abs() < 1e-6,
            "weight {w} differs from uniform beyond tolerance"
        );
    }
}

#[test]
fn planted_rare_sample_gets_a_large_boost() {
    // 999 samples clustered at the origin, one far outlier. Under the
    // default max combination over two dimensions, the outlier's weight
    // must exceed the cluster weight by orders of magnitude; we require
    // at least 10x.
    let n = 1000;
    let mut rng = seeded_rng(6, stream::EPSILON);
    let mut mu = Tensor::<f64>::zeros(vec![n, 2]);
    for i in 0..n - 1 {
        for dim in 0..2 {
            mu.data_mut()[i * 2 + dim] = rng.random_range(-0.05..0.05);
        }
    }
    mu.data_mut()[(n - 1) * 2] = 5.0;
    mu.data_mut()[(n - 1) * 2 + 1] = 5.0;

    let weights = density_weights(&mu, &ResampleConfig::default()).unwrap();
    let outlier = weights[n - 1];
    let median = {
        let mut sorted = weights.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[n / 2]
    };
    assert!(
        outlier > 10.0 * median,
        "outlier weight {outlier:.3e} is not 10x the median {median:.3e}"
    );
}

#[test]
fn weighted_draws_match_probabilities_in_frequency() {
    let dist = SamplingDistribution::new(&[2.0, 3.0, 5.0]).unwrap();
    assert_eq!(dist.probs(), &[0.2, 0.3, 0.5]);
    let mut rng = seeded_rng(7, stream::BATCH);
    let draws = 100_000;
    let mut counts = [0usize; 3];
    for idx in dist.draw_batch(&mut rng, draws) {
        counts[idx] += 1;
    }
    for (i, &expected) in [0.2, 0.3, 0.5].iter().enumerate() {
        let freq = counts[i] as f64 / draws as f64;
        assert!(
            (freq - expected).abs() < MC_TOL,
            "index {i}: frequency {freq:.4} vs probability {expected}"
        );
    }
}

#[test]
fn draws_are_deterministic_in_the_rng_stream() {
    let dist = SamplingDistribution::new(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let a = dist.draw_batch(&mut seeded_rng(9, stream::BATCH), 50);
    let b = dist.draw_batch(&mut seeded_rng(9, stream::BATCH), 50);
    let c = dist.draw_batch(&mut seeded_rng(10, stream::BATCH), 50);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    /// Inverse-density weighting is order-reversing on bin masses: a
    /// sample from a strictly rarer bin always carries a strictly larger
    /// weight (1-D case makes bin membership unambiguous).
    #[test]
    fn rarer_bins_always_weigh_more(
        raw in proptest::collection::vec(-100.0f64..100.0, 2..60),
        bins in 1usize..12,
    ) {
        let n = raw.len();
        let mu = Tensor::new(vec![n, 1], raw).unwrap();
        let config = ResampleConfig { bins, ..Default::default() };
        let masses = dbvae_core::resampler::bin_masses(&mu, bins).unwrap();
        let weights = density_weights(&mu, &config).unwrap();

        let hist = &masses[0];
        // Recover each sample's bin from its weight ordering partner.
        let lo = mu.data().iter().cloned().fold(f64::INFINITY, f64::min) - 1e-6;
        let hi = mu.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-6;
        let width = (hi - lo) / bins as f64;
        let bin_of = |v: f64| (((v - lo) / width) as usize).min(bins - 1);

        for i in 0..n {
            for j in 0..n {
                let (mi, mj) = (hist[bin_of(mu.data()[i])], hist[bin_of(mu.data()[j])]);
                if mi < mj {
                    prop_assert!(
                        weights[i] > weights[j],
                        "mass {mi} < {mj} but weight {} <= {}",
                        weights[i], weights[j]
                    );
                }
            }
        }
    }

    /// Weights always form a probability vector.
    #[test]
    fn weights_are_normalized_and_positive(
        raw in proptest::collection::vec(-10.0f64..10.0, 1..40),
    ) {
        let n = raw.len();
        let mu = Tensor::new(vec![n, 1], raw).unwrap();
        let weights = density_weights(&mu, &ResampleConfig::default()).unwrap();
        prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(weights.iter().all(|&w| w > 0.0));
    }
}
