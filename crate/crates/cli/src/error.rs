//! Command-line error type and its process exit-code mapping.

use std::path::PathBuf;

/// Anything a pipeline command can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration: unknown key, unparsable value, inconsistent setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// A required artifact from an earlier pipeline stage is absent.
    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },

    /// Failure surfaced by the numerics library.
    #[error(transparent)]
    Core(#[from] wavejam::Error),

    /// I/O failure with the path that triggered it.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit code: 0 is success, 2 a configuration problem, 3 a missing
    /// artifact, 4 a numeric failure, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Core(e) => match e {
                wavejam::Error::Numeric(_) => 4,
                wavejam::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
                wavejam::Error::Io(_) => 1,
                _ => 2,
            },
            CliError::Io { source, .. } => {
                if source.kind() == std::io::ErrorKind::NotFound {
                    3
                } else {
                    1
                }
            }
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

/// Attaches the path to a raw I/O error.
pub fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
