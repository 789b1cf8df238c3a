use thiserror::Error;

use crate::amr::AmrError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Amr(#[from] AmrError),
    #[error(transparent)]
    Tensor(#[from] amrgen_autodiff::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    Mismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
