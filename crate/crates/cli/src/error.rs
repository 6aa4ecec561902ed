use emotrans_core::error::Error as CoreError;
use emotrans_mtetr::Error as MtetrError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CLIENT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("client failure: {0}")]
    Client(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Client(_) => EXIT_CLIENT,
            CliError::Validation(_) | CliError::Io { .. } => EXIT_VALIDATION,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

fn is_client_failure(e: &CoreError) -> bool {
    match e {
        CoreError::Client(_) => true,
        CoreError::Generation { attempts } => attempts.iter().all(|a| a.is_client_failure()),
        _ => false,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if is_client_failure(&e) {
            CliError::Client(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<MtetrError> for CliError {
    fn from(e: MtetrError) -> Self {
        match e {
            MtetrError::Core(c) => c.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<emotrans_core::ClientError> for CliError {
    fn from(e: emotrans_core::ClientError) -> Self {
        CliError::Client(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use emotrans_core::planner::{AttemptOutcome, AttemptTranscript};
    use emotrans_core::ClientError;

    #[test]
    fn exit_codes_follow_the_failure_kind() {
        let c: CliError = CoreError::Client(ClientError::Timeout(1.0)).into();
        assert_eq!(c.exit_code(), EXIT_CLIENT);
        let v: CliError = CoreError::Evaluation("empty".into()).into();
        assert_eq!(v.exit_code(), EXIT_VALIDATION);
        let m: CliError = MtetrError::Core(CoreError::Client(ClientError::Unreachable("x".into()))).into();
        assert_eq!(m.exit_code(), EXIT_CLIENT);
        assert_eq!(CliError::Usage("bad".into()).exit_code(), EXIT_USAGE);
    }

    #[test]
    fn generation_failure_is_a_client_failure_only_when_every_attempt_was() {
        let attempt = |outcome| AttemptTranscript {
            attempt: 1,
            prompt: String::new(),
            outcome,
        };
        let all = CoreError::Generation {
            attempts: vec![attempt(AttemptOutcome::ClientFailure("down".into()))],
        };
        assert_eq!(CliError::from(all).exit_code(), EXIT_CLIENT);
        let mixed = CoreError::Generation {
            attempts: vec![
                attempt(AttemptOutcome::ClientFailure("down".into())),
                attempt(AttemptOutcome::Lines(vec!["one".into()])),
            ],
        };
        assert_eq!(CliError::from(mixed).exit_code(), EXIT_VALIDATION);
    }
}
