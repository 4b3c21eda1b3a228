use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input `{field}`: {message}")]
    Input { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("incompatible architectures: {0}")]
    IncompatibleArchitectures(String),

    #[error("index {index} out of range (len {len}) in {context}")]
    IndexOutOfRange {
        context: String,
        index: usize,
        len: usize,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn input(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Input {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}
