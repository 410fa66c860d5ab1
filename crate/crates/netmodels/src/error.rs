use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("parameter set is missing '{0}'")]
    MissingWeight(String),

    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
