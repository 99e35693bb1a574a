use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration is missing keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("invalid argument: {0}")]
    Usage(String),

    /// The model fell, failed to integrate, or walked unsteadily.
    #[error("{0}")]
    Domain(String),

    #[error(transparent)]
    Model(#[from] neurowalk::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl CliError {
    /// 1 for domain failures, 2 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Model(e) if matches!(e, neurowalk::Error::NoViableGait) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
