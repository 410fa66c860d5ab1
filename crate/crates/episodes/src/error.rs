//! Error types for dataset loading and episode sampling.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("class `{0}` contains no images")]
    EmptyClass(String),

    #[error("manifest problem: {0}")]
    Manifest(String),

    #[error("dataset layout problem: {0}")]
    Layout(String),

    #[error("episode needs {required} classes but the dataset has {available}")]
    InsufficientClasses { required: usize, available: usize },

    #[error("class `{class}` needs {required} images for this episode spec but has {available}")]
    InsufficientImages {
        class: String,
        required: usize,
        available: usize,
    },

    #[error("invalid episode spec: {0}")]
    BadSpec(String),

    #[error("invalid synthetic spec: {0}")]
    BadSynthetic(String),

    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
}

pub type Result<T> = std::result::Result<T, EpisodeError>;
