use std::path::PathBuf;

use bmap_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 1 usage, 2 I/O or malformed input, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 1,
            Self::Io { .. } | Self::Format { .. } => 2,
            Self::Core(e) => match e {
                CoreError::InvalidParameter { .. }
                | CoreError::InvalidClassCount(_)
                | CoreError::InvalidShape { .. }
                | CoreError::PhantomDoesNotFit { .. } => 1,
                CoreError::Checkpoint(_)
                | CoreError::DataLength { .. }
                | CoreError::LabelOutOfRange { .. }
                | CoreError::ShapeMismatch
                | CoreError::ClassCountMismatch { .. }
                | CoreError::TapeMismatch => 2,
                _ => 3,
            },
        }
    }
}
