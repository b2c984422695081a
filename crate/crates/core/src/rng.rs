//! Seed handling.
//!
//! Every stochastic routine takes either a `u64` seed or a caller-owned RNG.
//! Parallel work derives independent streams with [`substream`]: the ChaCha8
//! key comes from the scenario seed and the 64-bit stream id is the work-item
//! index, so `(seed, index)` fully determines the draws of that item.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
