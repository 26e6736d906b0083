use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] drsan::Error),

    #[error("{origin}:{line}: {detail}")]
    Config {
        origin: String,
        line: usize,
        detail: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Failed(String),
}

pub type CliResult<T> = Result<T, CliError>;
