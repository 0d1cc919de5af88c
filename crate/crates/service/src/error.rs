use bnelicit::{ElicitationError, GraphError, InferenceError, LogLinearError, ModelFileError, SynthesisError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    LogLinear(#[from] LogLinearError),
    #[error(transparent)]
    Elicitation(#[from] ElicitationError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("the model has no tables; run `synthesize` first")]
    NotSynthesized,
    #[error("{0}")]
    Usage(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("no pending proposal {0}")]
    UnknownProposal(u64),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// The `error` object of a structured diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: &'static str,
    pub message: String,
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Graph(_) => "graph",
            ServiceError::LogLinear(_) => "loglinear",
            ServiceError::Elicitation(_) => "elicitation",
            ServiceError::Synthesis(_) => "synthesis",
            ServiceError::Inference(_) => "inference",
            ServiceError::ModelFile(_) => "model_file",
            ServiceError::NotSynthesized => "not_synthesized",
            ServiceError::Usage(_) => "usage",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownProposal(_) => "unknown_proposal",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn diagnostic(&self) -> Diagnostic {
        Diagnostic {
            kind: self.kind(),
            message: self.to_string(),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
