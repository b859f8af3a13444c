//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SotError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown key `{key}` referenced {context}")]
    Referential { key: String, context: String },

    #[error("duplicate {what} `{key}`")]
    Duplicate { what: String, key: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at step {step} (learning rate too high?)")]
    NonFiniteLoss { step: usize },

    #[error("node budget of {budget} exceeded; best incumbent objective {incumbent:?}")]
    NodeBudget { budget: usize, incumbent: Option<f64> },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<SotError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SotError {
    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        SotError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SotError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        SotError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 input error, 3 stage failure,
    /// 4 solver node-budget abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            SotError::Stage { source, .. } => match source.exit_code() {
                4 => 4,
                _ => 3,
            },
            SotError::NodeBudget { .. } => 4,
            SotError::Parse { .. }
            | SotError::Referential { .. }
            | SotError::Duplicate { .. }
            | SotError::Config(_)
            | SotError::Io { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SotError>;
