use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants to exit codes: configuration problems exit with 2,
/// contract violations (shape mismatches, invariant breaches) with 3,
/// everything else with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("gripper model error: {0}")]
    Model(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("index out of bounds: {0}")]
    OutOfBounds(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Contract(_) | Error::Model(_) | Error::OutOfBounds(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
