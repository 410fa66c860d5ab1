//! Error types for the training engines.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model/scope mismatch: {0}")]
    Scope(String),

    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite { quantity: &'static str, iteration: u64 },

    #[error("training failed at iteration {iteration}: {source}")]
    AtIteration {
        iteration: u64,
        #[source]
        source: Box<MetaError>,
    },

    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),

    #[error(transparent)]
    Model(#[from] netmodels::ModelError),

    #[error(transparent)]
    Episode(#[from] episodes::EpisodeError),
}

impl MetaError {
    /// Wraps any error with the iteration it occurred at.
    pub fn at(self, iteration: u64) -> MetaError {
        MetaError::AtIteration { iteration, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, MetaError>;
