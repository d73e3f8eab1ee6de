use std::path::PathBuf;

use serde::Serialize;

/// Failures of the file layer and the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `line` is 1-based when known.
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] rpsjs_core::Error),

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, RunError>;

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        RunError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Io { .. } => "io",
            RunError::Parse { .. } => "parse",
            RunError::Core(rpsjs_core::Error::Validation(_)) => "validation",
            RunError::Core(_) => "simulation",
            RunError::Usage(_) => "usage",
        }
    }

    /// Machine-readable form printed by the CLI on failure.
    pub fn report(&self) -> ErrorReport {
        let (file, line) = match self {
            RunError::Io { path, .. } => (Some(path.display().to_string()), None),
            RunError::Parse { path, line, .. } => (Some(path.display().to_string()), *line),
            _ => (None, None),
        };
        ErrorReport {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                file,
                line,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}
