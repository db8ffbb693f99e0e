use std::io;
use std::path::PathBuf;

/// Errors from the harness and file formats, grouped by the exit code the
/// CLI reports for them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Data { path: String, message: String },
    #[error("{0}")]
    Numerical(#[from] kstep_core::Error),
    #[error("{failed} of {total} replicates failed")]
    ReplicateFailures { failed: usize, total: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data { .. } | Error::Io { .. } => 3,
            Error::Numerical(_) | Error::ReplicateFailures { .. } => 4,
        }
    }
}
