use std::path::PathBuf;

use dmv_core::relenergy::RelEnergyError;
use dmv_core::solver::SolverError;
use thiserror::Error;

use crate::config::ConfigError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("cannot write '{}': {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] RelEnergyError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) | Self::Io { .. } => EXIT_USAGE,
            Self::Analysis(
                RelEnergyError::InvalidBounds(_)
                | RelEnergyError::InvalidConstants(_)
                | RelEnergyError::InvalidTestFunction(_),
            ) => EXIT_USAGE,
            Self::Solver(_) | Self::Analysis(_) => EXIT_VERIFICATION,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
