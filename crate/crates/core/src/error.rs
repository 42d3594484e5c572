use thiserror::Error;

/// Structural violations found while building a license tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{0} must not be empty")]
    Empty(String),
    #[error("duplicate id `{id}` in {scope}")]
    DuplicateId { scope: String, id: String },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
}

/// Failures of the evaluation engine (matching, consumption, allocation).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("no {what} matches {request}")]
    NotFound { what: &'static str, request: String },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("chooser returned `{0}`, which is not one of the candidates")]
    ChooserContract(String),
}
