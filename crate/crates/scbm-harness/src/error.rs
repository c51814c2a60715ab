use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The scenario text does not parse or has keys of the wrong shape.
    #[error("{source_name}: line {line}, column {column}: {message}")]
    Parse { source_name: String, line: usize, column: usize, message: String },

    /// A value violates a rule; `field` is the dotted path into the scenario.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown {kind} preset `{name}`; available: {available}")]
    UnknownPreset { kind: &'static str, name: String, available: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    /// A model or solver failure while running one sweep point.
    #[error("point `{point}`: {source}")]
    Point { point: String, source: scbm_core::Error },
}

impl HarnessError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Invalid { field: field.into(), message: message.into() }
    }
}
