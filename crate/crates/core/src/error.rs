use std::path::PathBuf;

/// Errors produced by the library.
///
/// `Io` and `Format` describe problems with files on disk; every other variant
/// is a violated precondition on otherwise readable data.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("band count < 3 (found {0})")]
    TooFewBands(usize),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("affine transform is not invertible (determinant {0})")]
    SingularTransform(f64),

    #[error("annotation {id}: {message}")]
    InvalidAnnotation { id: u64, message: String },

    #[error("image {id}: {message}")]
    InvalidImage { id: u64, message: String },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True when the failure came from reading or decoding a file rather
    /// than from invalid values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
