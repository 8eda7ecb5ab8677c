//! Crate-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the numeric core and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its validity range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two objects that must agree in shape or discretization do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A queried point lies outside the mesh domain.
    #[error("point ({x}, {y}) lies outside the mesh domain")]
    OutOfDomain { x: f64, y: f64 },

    /// A numeric procedure failed (non-SPD matrix, no convergence, non-finite data).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The frequency constraint leaves no feasible direction.
    #[error("constraint null space is empty; no feasible interferer exists")]
    EmptyNullSpace,

    /// Dataset is degenerate for training (e.g. a single class).
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    /// A persisted artifact is malformed or inconsistent.
    #[error("malformed artifact {path}: {reason}")]
    Format { path: String, reason: String },

    /// A persisted artifact was produced under a different configuration.
    #[error("artifact {path} was built from a different configuration (hash {found:#018x}, expected {expected:#018x})")]
    ConfigHashMismatch {
        path: String,
        found: u64,
        expected: u64,
    },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidParameter`].
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Shorthand for [`Error::Format`].
    pub fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
