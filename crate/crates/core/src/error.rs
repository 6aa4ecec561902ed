use thiserror::Error;

use crate::caption::ValidationReport;
use crate::planner::AttemptTranscript;
use crate::types::EmotionLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure talking to an external model service.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("request timed out after {0:.1}s")]
    Timeout(f64),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("service error: {0}")]
    Service(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("audio format error: {0}")]
    Format(String),
    #[error("loudness normalization failed: {0}")]
    Normalization(String),
    #[error("synthesized emotion never matched `{target}` after {attempts} attempts")]
    Consistency { target: EmotionLabel, attempts: usize },
    #[error("no reference for speaker `{speaker}` with emotion `{emotion}`")]
    Catalog { speaker: String, emotion: EmotionLabel },
    #[error("discourse generation failed after {} attempts", attempts.len())]
    Generation { attempts: Vec<AttemptTranscript> },
    #[error("transcription failed: {0}")]
    Transcription(String),
    #[error("no voiced frames found")]
    Unvoiced,
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("prompt spec mismatch: {0}")]
    Spec(String),
    #[error("caption composition failed after {} attempts", reports.len())]
    Composition { reports: Vec<ValidationReport> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
