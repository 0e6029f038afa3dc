use std::path::PathBuf;

/// Errors raised anywhere in the transducer stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch for `{name}`: expected {expected}, found {found}")]
    Shape {
        name: String,
        expected: String,
        found: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("instance too large: {0}")]
    Size(String),

    #[error("symbols that cannot be assigned a vocabulary kind: {}", .0.join(" "))]
    Untaggable(Vec<String>),

    #[error("utterance ids differ (missing from hypotheses: [{}]; extra in hypotheses: [{}])", .missing.join(", "), .extra.join(", "))]
    IdMismatch { missing: Vec<String>, extra: Vec<String> },

    #[error("vocabulary hash mismatch: checkpoint was trained with {expected}, vocabulary file hashes to {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(
        name: impl Into<String>,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            name: name.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
