//! Seeded random streams.
//!
//! Every run owns a [`SimRng`] built from a single 64-bit seed. Campaign
//! trials derive their seeds from `(base_seed, trial_index)` through
//! separate ChaCha streams, so trial seeds are independent of scheduling
//! and of how many trials run.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for one run.
pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of trial `index` under `base_seed`.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng.next_u64()
}
