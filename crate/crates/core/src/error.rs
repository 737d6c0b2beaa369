use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("state space has {size} states, above the cap of {cap}")]
    StateCapExceeded { size: u128, cap: u64 },

    #[error("reward module fault: {0}")]
    RewardFault(String),

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("internal consistency fault: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Stable machine-readable kind, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Config(_) => "config",
            LabError::InvalidState(_) => "invalid_state",
            LabError::StateCapExceeded { .. } => "state_cap_exceeded",
            LabError::RewardFault(_) => "reward_fault",
            LabError::NotReady(_) => "not_ready",
            LabError::Consistency(_) => "consistency",
            LabError::Io { .. } => "io",
            LabError::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
