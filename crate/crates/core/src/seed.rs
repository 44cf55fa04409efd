//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(parent, index)`. Any restart can be regenerated from
/// the master seed alone, independent of which other restarts ran.
pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Named sub-streams within one restart.
pub mod stream {
    pub const ENV: u64 = 1;
    pub const SOLVER: u64 = 2;
    pub const DEMOS: u64 = 3;
    pub const SCOT: u64 = 4;
    pub const RANDOM_SUMMARY: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const KMEANS: u64 = 7;
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
