//! Dataset ingestion and few-shot episode sampling.
//!
//! The crate exposes three layers:
//!
//! * [`DatasetHandle`] — an immutable class/image index, built either from
//!   a directory of PNGs (per-class subdirectories or a CSV manifest, with
//!   lazy pixel decoding) or fully in memory from the synthetic generator.
//! * [`sample_episode`] — N-way K-shot task construction with disjoint
//!   support/query sets, exact per-class balance and permuted labels,
//!   driven by an explicit generator state.
//! * [`derive_rng`] — the run-wide convention for deriving independent,
//!   reproducible random streams from (seed, stream, index) coordinates.

mod dataset;
mod episode;
mod error;
mod rng;

pub use dataset::{generate_synthetic, load_dataset, DatasetHandle, LoadOptions, SyntheticSpec};
pub use episode::{one_hot, sample_episode, stack_images, Episode, EpisodeSpec};
pub use error::{EpisodeError, Result};
pub use rng::{
    derive_rng, derive_seed, STREAM_DROPOUT, STREAM_EPISODES, STREAM_EVAL, STREAM_INIT,
    STREAM_PRETRAIN, STREAM_SYNTHETIC,
};
