use alloc::string::String;

use crate::service::ServiceError;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("template error: unresolved placeholder `{0}`")]
    Template(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("state error: {0}")]
    State(String),
    #[error("reservoir service: {0}")]
    Service(#[from] ServiceError),
    #[error("reservoir service ({context}): {source}")]
    ServiceContext { context: String, source: ServiceError },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
