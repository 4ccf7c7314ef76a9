use std::path::{Path, PathBuf};

/// Errors raised anywhere in the pipeline.
///
/// Each variant maps onto one CLI exit code, see [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("state error: {0}")]
    State(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Prefixes the message with the pipeline stage that failed.
    pub fn at_stage(self, stage: &str) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{stage}: {m}")),
            Error::Data(m) => Error::Data(format!("{stage}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{stage}: {m}")),
            Error::State(m) => Error::State(format!("{stage}: {m}")),
            Error::Internal(m) => Error::Internal(format!("{stage}: {m}")),
            Error::Io { path, source } => Error::Data(format!("{stage}: i/o error on {}: {source}", path.display())),
        }
    }

    /// 0 is success; 1 config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::State(_) | Error::Internal(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
