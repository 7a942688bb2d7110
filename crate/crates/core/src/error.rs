use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A mathematical precondition (unitarity, normalization) does not hold.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("impossible outcome {outcome}: probability {probability:e}")]
    ImpossibleOutcome { outcome: String, probability: f64 },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("correction derivation failed: {0}")]
    Derivation(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("transcript invalid at seq {seq}: {reason}")]
    Validation { seq: u64, reason: String },
}
