//! Error types for the evaluation protocol and metrics.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Config(String),

    #[error("no trained model for {shots}-shot")]
    MissingModel { shots: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table: {0}")]
    Format(String),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),

    #[error(transparent)]
    Model(#[from] netmodels::ModelError),

    #[error(transparent)]
    Episode(#[from] episodes::EpisodeError),

    #[error(transparent)]
    Meta(#[from] metalearn::MetaError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
