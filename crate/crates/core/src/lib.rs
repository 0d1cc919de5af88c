//! Low-complexity Bayesian networks from elicited probabilities.
//!
//! The pipeline: describe a [`graph::Dag`], reduce it to an order-two
//! log-linear model ([`loglinear`]), collect marginals and first-order
//! conditionals from experts ([`elicitation`]), reconcile them, synthesize
//! full tables ([`synthesis`]) and query the result ([`inference`]).

pub mod decimal;
pub mod elicitation;
pub mod factor;
pub mod fixtures;
pub mod graph;
pub mod inference;
pub mod loglinear;
pub mod model_file;
pub mod synthesis;

pub use elicitation::{ElicitationError, ElicitationStore};
pub use graph::{Dag, GraphError, Variable};
pub use inference::{Evidence, InferenceError, Network};
pub use loglinear::{InteractionSpec, LogLinearError};
pub use synthesis::{Cpt, SynthesisError, SynthesisMode};
pub use model_file::{ModelFile, ModelFileError};

/// Any error the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
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
}
