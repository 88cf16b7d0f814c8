use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A text or binary input could not be parsed. `location` names the
    /// line, byte offset, or element where parsing stopped.
    #[error("{}: parse error at {location}: {message}", path_or_input(.path))]
    Parse {
        path: Option<PathBuf>,
        location: String,
        message: String,
    },

    /// Parsed successfully but violates a data invariant (duplicate ids,
    /// non-orthonormal rotations, missing files).
    #[error("{}: {message}", path_or_input(.path))]
    Validation {
        path: Option<PathBuf>,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: image codec error: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

fn path_or_input(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => "<input>".to_string(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            path: None,
            message: message.into(),
        }
    }

    /// Attaches a file path to parse and validation errors that lack one.
    pub(crate) fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse {
                path: None,
                location,
                message,
            } => Error::Parse {
                path: Some(p.into()),
                location,
                message,
            },
            Error::Validation {
                path: None,
                message,
            } => Error::Validation {
                path: Some(p.into()),
                message,
            },
            other => other,
        }
    }

    /// True for errors caused by bad user input rather than I/O or internal faults.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::Validation { .. }
        )
    }
}
