use thiserror::Error;

/// Errors produced anywhere in the navigation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene generation parameters: {0}")]
    InvalidParams(String),
    #[error("scene generation failed after {0} placement retries")]
    GenerationFailed(usize),
    #[error("no goal cell is reachable from the start cell")]
    Unreachable,
    #[error("instance {0} has no eligible goal cells")]
    EmptyEligibleSet(u32),
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid episode record: {0}")]
    InvalidRecord(String),
    #[error("non-finite loss encountered: {0}")]
    NonFiniteLoss(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("no active episode")]
    NoActiveEpisode,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
