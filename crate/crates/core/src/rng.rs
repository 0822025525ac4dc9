//! Seeding policy.
//!
//! All randomness flows through ChaCha8 generators seeded from 64-bit values.
//! Independent streams (one per Monte Carlo trial) are derived by mixing the
//! campaign seed with the trial index through SplitMix64, so trial results do
//! not depend on scheduling order and campaigns are reproducible bit-for-bit
//! within one build. Cross-implementation bit equality is not promised.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-period mixing of a 64-bit state.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for the sub-stream `stream` of a campaign seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x243f6a8885a308d3)))
}

/// The generator used everywhere in this crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for one trial of a seeded campaign.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, trial))
}
