//! Seeded random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from a user seed
//! and a fixed stream id, so adding draws in one place never shifts the
//! sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Rng;

/// Stream ids. Values are part of the reproducibility contract.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const VALIDATION_SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TRAIN_NOISE: u64 = 4;
    pub const VAL_NOISE: u64 = 5;
    pub const SAMPLER: u64 = 6;
    pub const MONSOON: u64 = 7;
    pub const WINDOWS: u64 = 8;
    pub const SPLIT: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
