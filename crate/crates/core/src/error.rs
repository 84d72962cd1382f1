use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input is structurally valid but numerically unusable (too few rows,
    /// zero variance, zero-norm vectors, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A caller broke an operation's precondition (shape mismatch,
    /// non-symmetric matrix, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("neighbor graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("{path}: format error at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: validation failed: {}", describe_lines(.lines, .reason))]
    Validation {
        path: PathBuf,
        lines: Vec<usize>,
        reason: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn describe_lines(lines: &[usize], reason: &str) -> String {
    if lines.is_empty() {
        return reason.to_string();
    }
    let shown: Vec<String> = lines.iter().take(10).map(|l| l.to_string()).collect();
    let more = if lines.len() > 10 {
        format!(" (+{} more)", lines.len() - 10)
    } else {
        String::new()
    };
    format!("{reason} (line {}{more})", shown.join(", "))
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's input or configuration, as
    /// opposed to an internal numerical breakdown.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}
