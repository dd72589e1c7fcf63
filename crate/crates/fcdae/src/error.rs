use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the file, config and study layers. [`Error::code`]
/// gives the greppable prefix the command line prints in front of each
/// message.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{origin}: bad magic {found:?}, expected {expected:?}")]
    BadMagic { origin: String, expected: String, found: String },
    #[error("{origin}: format version {found} is not supported (expected {expected})")]
    VersionMismatch { origin: String, found: u32, expected: u32 },
    #[error("{origin}: truncated, {what}")]
    Truncated { origin: String, what: String },
    #[error("{origin}: {message}")]
    Format { origin: String, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] fcdae_core::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        use fcdae_core::Error as C;
        match self {
            Error::Config(_) => "E_CONFIG",
            Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. }
            | Error::Format { .. } => "E_FORMAT",
            Error::Shape(_) => "E_SHAPE",
            Error::Io { .. } => "E_IO",
            Error::Core(e) => match e {
                C::Shape(_) | C::NotSymmetric => "E_SHAPE",
                C::InvalidArgument(_) | C::EmptyDataset | C::DuplicateSeed(_) | C::TooFewModels(_) => "E_CONFIG",
                _ => "E_NUMERIC",
            },
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(origin: &str, msg: impl Into<String>) -> Self {
        Error::Format { origin: origin.to_string(), message: msg.into() }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }
}
