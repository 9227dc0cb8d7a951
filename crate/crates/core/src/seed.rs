//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit seed derived from a
//! parent seed and an index with the SplitMix64 finalizer:
//!
//! ```text
//! z  = parent + (index + 1) * 0x9E3779B97F4A7C15      (wrapping)
//! z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! Streams are then produced by `ChaCha8Rng::seed_from_u64(out)`, so any
//! implementation that reproduces these two steps reproduces the corpus.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Sub-stream tags used under a trial seed.
pub mod stream {
    /// State path of the Markov chain.
    pub const PATH: u64 = 0;
    /// Initial iterate `w₀` of Oja's algorithm.
    pub const INIT: u64 = 1;
    /// Base noise `Z_t` of the data stream.
    pub const SAMPLES: u64 = 2;
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child `index` under `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Deterministic RNG for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
