use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed file contents; `msg` names the line or record.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] genre_align_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit status: 1 for unreadable or malformed files, 2 for bad
    /// configuration, 3 for numerical divergence.
    pub fn exit_code(&self) -> i32 {
        use genre_align_core::Error as Core;
        match self {
            Error::Io { .. } | Error::Format { .. } => 1,
            Error::Config(_) => 2,
            Error::Core(Core::Divergence { .. } | Core::DegenerateCovariance { .. }) => 3,
            Error::Core(_) => 2,
        }
    }
}
