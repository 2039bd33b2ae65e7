use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("scenario failed validation: {0}")]
    Validation(ValidationReport),

    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("schema violation in `{section}`: {message}")]
    Schema { section: String, message: String },

    #[error("unsupported format version {found} (supported: {supported})")]
    FormatVersion { found: i64, supported: i64 },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("scenario too large for exhaustive check: {cells} cells (limit {limit})")]
    TooLarge { cells: usize, limit: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownId { .. } => "unknown_id",
            Error::Validation(_) => "validation",
            Error::Syntax(_) => "syntax",
            Error::Schema { .. } => "schema",
            Error::FormatVersion { .. } => "format_version",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Empty(_) => "empty",
            Error::TooLarge { .. } => "too_large",
            Error::Io { .. } => "io",
        }
    }
}
