use rbm_core::{ExactError, LatticeError, ModelError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("path {path} produced a non-finite value {value}")]
    NonFinite { path: u64, value: f64 },
    #[error("{0}")]
    Internal(String),
}

impl LabError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit code: 2 for configuration problems, 3 for everything
    /// else that stops a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Parse(_) | Self::Model(_) => 2,
            Self::Lattice(e) if is_config_lattice(e) => 2,
            _ => 3,
        }
    }
}

fn is_config_lattice(e: &LatticeError) -> bool {
    matches!(
        e,
        LatticeError::Params(_)
            | LatticeError::StateCap { .. }
            | LatticeError::ScaleTooSmall { .. }
            | LatticeError::Constants(_)
            | LatticeError::AssumptionViolation(_)
            | LatticeError::Model(_)
    )
}

pub type Result<T> = std::result::Result<T, LabError>;
