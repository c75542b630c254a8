use std::path::PathBuf;

use hxr_core::service::ServiceError;

/// Errors surfaced by the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Core(#[from] hxr_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn file(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::File {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// 0 success, 2 configuration or argument, 3 transport, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use hxr_core::Error as C;
        match self {
            Error::Config(_) | Error::File { .. } | Error::Parse { .. } | Error::Schema(_) => 2,
            Error::Transport(_) => 3,
            Error::Core(C::Numeric(_) | C::Rank(_) | C::State(_)) => 4,
            Error::Core(C::Service(s) | C::ServiceContext { source: s, .. }) => service_exit_code(s),
            Error::Core(_) => 2,
        }
    }
}

impl From<ServiceError> for Error {
    fn from(e: ServiceError) -> Self {
        Error::Core(e.into())
    }
}

pub fn service_exit_code(e: &ServiceError) -> i32 {
    match e {
        ServiceError::Argument(_) | ServiceError::Capacity { .. } | ServiceError::Compatibility { .. } => 2,
        ServiceError::Server { .. }
        | ServiceError::Transport { .. }
        | ServiceError::Deadline { .. }
        | ServiceError::Parse(_) => 3,
    }
}
