//! Pipelines behind the `csrnnt` binary: corpus synthesis, lexicon
//! building, training, decoding, rescoring and scoring.

pub mod commands;
pub mod config;
pub mod selftest;

use std::path::Path;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] csrnnt::Error),
    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Core(csrnnt::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(csrnnt::Error::Numerical(_)) | CliError::SelfTest(_) => 3,
            CliError::Core(_) => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
