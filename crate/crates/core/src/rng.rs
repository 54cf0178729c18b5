//! Seed derivation.
//!
//! All randomness flows from explicit `u64` seeds. Independent streams
//! (per robot, per tick, per candidate, ...) are split off with
//! [`derive_seed`] so results never depend on evaluation order or on how
//! many worker threads run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with a path of stream labels into a new seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used with [`derive_seed`].
pub mod stream {
    pub const SCENARIO: u64 = 1;
    pub const PLANNING: u64 = 2;
    pub const SENSING: u64 = 3;
    pub const COMMS: u64 = 4;
    pub const EXECUTION: u64 = 5;
}
