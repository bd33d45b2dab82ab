use std::path::{Path, PathBuf};

/// Failure classes of the toolkit, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io { .. } => 5,
        }
    }

    /// Short tag used as the greppable prefix of error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Numerical(_) => "numerical",
            Error::Io { .. } => "io",
        }
    }
}

impl From<gemfnn_core::Error> for Error {
    fn from(e: gemfnn_core::Error) -> Self {
        use gemfnn_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) => Error::Config(msg),
            E::Numerical { .. } => Error::Numerical(msg),
            E::Shape { .. } | E::Data(_) | E::Variant { .. } => Error::Data(msg),
        }
    }
}
