use thiserror::Error;

use asymmap::attack::AttackError;
use asymmap::eval::EvalError;
use asymmap::oracle::OracleError;
use asymmap::scene::SceneError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("external service: {0}")]
    External(String),
    #[error("{stage} stage: missing artifact {path}; run `asymmap {stage}` first")]
    MissingArtifact { stage: String, path: String },
    #[error("{stage} stage: checksum mismatch for {path}")]
    Checksum { stage: String, path: String },
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) | CliError::MissingArtifact { .. } | CliError::Checksum { .. } => 3,
            CliError::External(_) => 4,
            CliError::Internal(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("{}: {e}", path.display()))
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::External(e.to_string())
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Config(m) => CliError::Config(m),
            AttackError::Oracle(o) => o.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Config(m) => CliError::Config(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
