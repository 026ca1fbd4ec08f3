use std::path::Path;

use thickstab_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    /// `2` for anything the user can fix in the config or environment,
    /// `3` when the numerics themselves fail.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter { .. }
                | CoreError::GridMismatch(_)
                | CoreError::InadmissibleProbe(_)
                | CoreError::BelowStabilizableRegime { .. }
                | CoreError::Format(_)
                | CoreError::Io(_) => 2,
                CoreError::SymbolEvaluation { .. }
                | CoreError::SupremumInfinite { .. }
                | CoreError::NoConvergence { .. }
                | CoreError::BracketFailure { .. }
                | CoreError::NonFiniteState { .. }
                | CoreError::Infeasible(_) => 3,
            },
        }
    }
}
