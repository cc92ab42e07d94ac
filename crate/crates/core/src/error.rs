//! Error and validation-report types shared across the crate.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Severity of a single validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One machine-readable validation finding, tied to an image when applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub image_id: Option<u64>,
    pub message: String,
}

impl ValidationIssue {
    pub fn error(image_id: Option<u64>, message: impl Into<String>) -> Self {
        ValidationIssue {
            severity: Severity::Error,
            image_id,
            message: message.into(),
        }
    }

    pub fn warning(image_id: Option<u64>, message: impl Into<String>) -> Self {
        ValidationIssue {
            severity: Severity::Warning,
            image_id,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON syntax or shape error; the source carries line/column position.
    #[error("{}: parse error: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Input failed referential or range validation; every offender is listed.
    #[error("validation failed with {} error(s)", issues.iter().filter(|i| i.severity == Severity::Error).count())]
    Validation { issues: Vec<ValidationIssue> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("injection error: {0}")]
    Injection(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),
}

impl Error {
    pub fn validation(issues: Vec<ValidationIssue>) -> Self {
        Error::Validation { issues }
    }

    /// The validation findings attached to this error, if any.
    pub fn issues(&self) -> &[ValidationIssue] {
        match self {
            Error::Validation { issues } => issues,
            _ => &[],
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
