use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the basis domain [-1, 1]")]
    Domain { value: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular linear system in {context}")]
    Singular { context: &'static str },

    #[error("non-finite value in {stage} at node {node}")]
    NonFinite { stage: &'static str, node: usize },

    #[error("control Hessian of the Hamiltonian has eigenvalue {min_eigenvalue:.3e} below floor {floor:.3e}")]
    HamiltonianNotConvex { min_eigenvalue: f64, floor: f64 },

    #[error("Kleinman iteration failed to converge: {reason}")]
    KleinmanDiverged { reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
