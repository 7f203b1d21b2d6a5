//! Deterministic seed derivation so that independent streams (environment
//! noise, planner sampling, scenario draws) never share an rng.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stream tag and an index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

/// Stream tags.
pub mod stream {
    pub const ENVIRONMENT: u64 = 1;
    pub const PLANNER: u64 = 2;
    pub const SCENARIO: u64 = 3;
    pub const DATASET: u64 = 4;
    pub const EXCITATION: u64 = 5;
    pub const SENSOR: u64 = 6;
}
