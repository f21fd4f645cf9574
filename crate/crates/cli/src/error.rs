use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn input(path: &Path, msg: impl ToString) -> Self {
        CliError::Input { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Input { .. } => 2,
            CliError::Failed(_) => 1,
        }
    }

    /// Structured form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let (kind, path) = match self {
            CliError::Usage(_) => ("usage", None),
            CliError::Input { path, .. } => ("input", Some(path.display().to_string())),
            CliError::Failed(_) => ("failed", None),
        };
        json!({
            "schema_version": crate::output::SCHEMA_VERSION,
            "error": { "kind": kind, "path": path, "message": self.to_string() },
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
