//! Seeded random streams.
//!
//! Every stochastic component (splitting, weight init, reparameterization
//! noise, batch sampling, synthetic rendering) draws from its own labelled
//! stream derived from a single run seed. Deriving instead of sharing one
//! generator keeps consumers independent: adding or removing draws in one
//! component cannot shift the values another component sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels for the streams used by the crate. Using the constants (rather
/// than ad-hoc strings) keeps producers and reproducers in sync.
pub mod stream {
    /// Train/validation split shuffling.
    pub const SPLIT: &str = "split";
    /// Weight initialisation.
    pub const INIT: &str = "init";
    /// Reparameterization noise (epsilon draws).
    pub const EPSILON: &str = "epsilon";
    /// Batch index sampling.
    pub const BATCH: &str = "batch";
    /// Synthetic corpus rendering.
    pub const SYNTHETIC: &str = "synthetic";
}

/// 64-bit FNV-1a over a byte string.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer; decorrelates nearby inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of the `label` stream from a base seed.
///
/// The derivation hashes the label and mixes it with the base seed, so
/// distinct labels give uncorrelated streams even for adjacent base seeds.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    splitmix64(base ^ fnv1a(label.as_bytes()))
}

/// A ChaCha8 generator for the `label` stream of `base`.
pub fn seeded_rng(base: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable() {
        // Frozen: a changed derivation would silently break every
        // reproducibility guarantee downstream.
        assert_eq!(derive_seed(42, stream::SPLIT), derive_seed(42, "split"));
        assert_ne!(derive_seed(42, stream::SPLIT), derive_seed(42, stream::INIT));
        assert_ne!(derive_seed(42, stream::SPLIT), derive_seed(43, stream::SPLIT));
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        let mut a1 = seeded_rng(7, stream::EPSILON);
        let mut b = seeded_rng(7, stream::BATCH);
        let _: u64 = b.random(); // consuming one stream ...
        let mut a2 = seeded_rng(7, stream::EPSILON);
        let x1: u64 = a1.random();
        let x2: u64 = a2.random(); // ... must not affect the other
        assert_eq!(x1, x2);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut r1 = seeded_rng(123, stream::INIT);
        let mut r2 = seeded_rng(123, stream::INIT);
        let a: [u64; 4] = std::array::from_fn(|_| r1.random());
        let b: [u64; 4] = std::array::from_fn(|_| r2.random());
        assert_eq!(a, b);
    }
}
