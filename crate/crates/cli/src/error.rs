use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed config text: syntax, unknown sections or keys, bad literals.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed config that breaks an invariant. `line` is the offending
    /// entry when one can be singled out.
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation {
        line: Option<usize>,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(lzs_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } => 2,
            CliError::Validation { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(line: Option<usize>, message: impl Into<String>) -> Self {
        CliError::Validation {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Library failures during a run: numerical breakdowns keep their own exit
/// code, everything else is an input the physics cannot accept.
impl From<lzs_core::Error> for CliError {
    fn from(e: lzs_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::invalid(None, e.to_string())
        }
    }
}
