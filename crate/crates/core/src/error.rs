use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected (second Laplacian eigenvalue {lambda2:.3e} is below the zero threshold)")]
    DisconnectedGraph { lambda2: f64 },

    #[error("mode assignment invalid: {0}")]
    InvalidAssignment(String),

    #[error("{edges} edges exceed the enumeration cap of {cap}")]
    ModeCapExceeded { edges: usize, cap: usize },

    #[error("problem size exceeds the brute-force cap: {0}")]
    SizeCapExceeded(String),

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("invalid interval [{rho_l}, {rho_u}]")]
    InvalidInterval { rho_l: f64, rho_u: f64 },

    #[error("degenerate interval: rho_l = rho_u = {0}")]
    DegenerateInterval(f64),

    #[error("not a probability vector: {0}")]
    NotStochastic(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
