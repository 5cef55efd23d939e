//! Library half of the `decouple` command: document parsing and the
//! subcommands, kept separate from argument handling so tests can drive them.

pub mod commands;
pub mod document;

use thiserror::Error;

pub use commands::{cmd_analyze, cmd_decouple, cmd_poles, cmd_verify, DecoupleOptions, Report};
pub use document::{parse_law, parse_system, LawDocument, SystemDocument};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// serde_json reports line and column.
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },

    #[error("{path}: field {field}: {detail}")]
    Field { path: String, field: String, detail: String },

    #[error(transparent)]
    Core(#[from] decouple_core::Error),

    #[error("precondition: {0}")]
    Precondition(String),
}
