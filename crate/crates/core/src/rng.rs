//! Seed derivation. Every stochastic stage draws from a ChaCha stream keyed
//! by a parent seed plus a path of indices, so results never depend on the
//! order in which independent work items are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

// Stage tags keep streams of different subsystems disjoint.
pub const TAG_SPLIT: u64 = 1;
pub const TAG_WALK: u64 = 2;
pub const TAG_EMBED: u64 = 3;
pub const TAG_GROUP: u64 = 4;
pub const TAG_INIT: u64 = 5;
pub const TAG_TRAIN: u64 = 6;
pub const TAG_EVAL: u64 = 7;
pub const TAG_REQUEST: u64 = 8;
pub const TAG_SHARD: u64 = 9;
