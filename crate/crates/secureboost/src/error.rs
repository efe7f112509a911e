use std::path::PathBuf;

use secureboost_core::ErrorCategory;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] secureboost_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("party {party} failed: {message}")]
    Party { party: u16, message: String, category: ErrorCategory },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse { path: path.into(), message: message.to_string() }
    }

    /// Process exit code: 2 configuration or input, 3 protocol, 4 crypto.
    pub fn exit_code(&self) -> i32 {
        let category = match self {
            Error::Core(e) => e.category(),
            Error::Party { category, .. } => *category,
            Error::Io { .. } | Error::Parse { .. } | Error::Config(_) => ErrorCategory::Config,
        };
        match category {
            ErrorCategory::Config | ErrorCategory::Data => 2,
            ErrorCategory::Protocol => 3,
            ErrorCategory::Crypto => 4,
        }
    }
}
