use std::fmt;

use periocular_core::Error as CoreError;
use periocular_neural::NeuralError;

/// Failures carry the pipeline stage they happened in and map onto the
/// process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("[{stage}] {message}")]
    Data {
        stage: &'static str,
        message: String,
    },
    #[error("[{stage}] internal error: {message}")]
    Internal {
        stage: &'static str,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Internal { .. } => 3,
        }
    }

    pub fn data(stage: &'static str, message: impl fmt::Display) -> Self {
        CliError::Data {
            stage,
            message: message.to_string(),
        }
    }

    pub fn internal(stage: &'static str, message: impl fmt::Display) -> Self {
        CliError::Internal {
            stage,
            message: message.to_string(),
        }
    }
}

/// Attaches a stage to lower-level errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for std::result::Result<T, CoreError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        // core only touches the filesystem to read inputs
        self.map_err(|e| CliError::data(stage, e))
    }
}

impl<T> StageExt<T> for std::result::Result<T, NeuralError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            NeuralError::Inference(_) | NeuralError::Io(_) => CliError::internal(stage, e),
            other => CliError::data(stage, other),
        })
    }
}

impl<T> StageExt<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::internal(stage, e))
    }
}
