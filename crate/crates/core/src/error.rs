use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LzError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("matrix is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("invalid objective data: {0}")]
    InvalidObjective(String),

    #[error("{operation} is not defined for the {objective} objective")]
    UnsupportedObjective {
        operation: &'static str,
        objective: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical abort at iteration {iteration}: {detail}")]
    NumericalAbort { iteration: usize, detail: String },

    #[error("quantum speed limit undefined: initial state has zero energy variance under the free Hamiltonian")]
    UndefinedSpeedLimit,
}

pub type Result<T, E = LzError> = std::result::Result<T, E>;
