use std::path::PathBuf;

use easy_iil_core::error::{AssistantError, GatingError, NoviceError, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("log schema version {found}, this build reads {expected}")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("malformed log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error("step {k} of episode {episode}: weight {weight} breaks the source rule")]
    WeightRule { episode: u32, k: u64, weight: f64 },
    #[error(transparent)]
    Gating(#[from] GatingError),
    #[error(transparent)]
    Novice(#[from] NoviceError),
    #[error(transparent)]
    Assistant(#[from] AssistantError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("websocket: {0}")]
    WebSocket(#[from] tungstenite::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
