//! Deterministic random-stream derivation.
//!
//! Every random decision in a run is made by a generator derived from the
//! run seed plus a (stream, index) pair: the stream names the purpose
//! (episode sampling, dropout masks, ...) and the index is a loop counter
//! (meta-iteration, task number). Because derivation is a pure function,
//! any component can be re-run in isolation — or in parallel — and still
//! draw exactly the numbers it would have drawn in a sequential run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for weight initialization.
pub const STREAM_INIT: u64 = 0;
/// Stream tag for meta-training episode sampling.
pub const STREAM_EPISODES: u64 = 1;
/// Stream tag for dropout masks.
pub const STREAM_DROPOUT: u64 = 2;
/// Stream tag for evaluation-task sampling.
pub const STREAM_EVAL: u64 = 3;
/// Stream tag for pretraining batch selection.
pub const STREAM_PRETRAIN: u64 = 4;
/// Stream tag for synthetic data generation.
pub const STREAM_SYNTHETIC: u64 = 5;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Collapses (seed, stream, index) into a single well-mixed 64-bit value.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ stream) ^ index)
}

/// A generator for one (stream, index) slot of a run.
pub fn derive_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
