//! Seed derivation. Every stochastic stage owns a ChaCha stream derived from
//! the run seed and a stage tag, so stages never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(seed: u64, tag: u64) -> Rng {
    rng(derive(seed, tag))
}

/// Stage tags.
pub mod tag {
    pub const CLASSIFIER_INIT: u64 = 1;
    pub const CLASSIFIER_SGD: u64 = 2;
    pub const DISC_SPLIT: u64 = 3;
    pub const DISC_INIT: u64 = 4;
    pub const DISC_SGD: u64 = 5;
    pub const DISC_TEMPERATURE: u64 = 6;
    pub const FORECASTER_TEMPERATURE: u64 = 7;
    pub const FEATLEARN: u64 = 8;
    pub const RETRAIN: u64 = 9;
    pub const SAMPLE: u64 = 10;
}
