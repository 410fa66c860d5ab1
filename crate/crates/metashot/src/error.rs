use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Problems in the configuration file or overrides.
    #[error("{0}")]
    Config(String),

    /// Stage-order violations, locked or inconsistent run directories.
    #[error("{0}")]
    Run(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("i/o on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Meta(#[from] metalearn::MetaError),

    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),

    #[error(transparent)]
    Episode(#[from] episodes::EpisodeError),

    #[error(transparent)]
    Model(#[from] netmodels::ModelError),

    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
