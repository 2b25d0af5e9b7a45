use std::fmt;
use std::path::Path;

use spsu_core::Error as CoreError;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Data = 3,
    Solver = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Solver,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::data(format!("{}: {err}", path.display()))
    }

    pub fn context(self, path: &Path) -> Self {
        CliError {
            kind: self.kind,
            message: format!("{}: {}", path.display(), self.message),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let kind = match &err {
            CoreError::InvalidArgument(_) | CoreError::UnknownTexture(_) => ExitKind::Usage,
            CoreError::NoConvergence(_)
            | CoreError::NonFiniteGradient { .. }
            | CoreError::ObjectiveIncrease { .. }
            | CoreError::Infeasible(_)
            | CoreError::InactiveBlock { .. } => ExitKind::Solver,
            CoreError::DimensionMismatch { .. }
            | CoreError::RankDeficient { .. }
            | CoreError::ZeroMeanBand(_)
            | CoreError::ZeroColumn(_)
            | CoreError::NonFiniteData(_) => ExitKind::Data,
        };
        CliError {
            kind,
            message: err.to_string(),
        }
    }
}
