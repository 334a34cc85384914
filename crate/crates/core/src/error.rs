use enrand_sdp::{SdpError, Status};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("behaviour is not realizable under the given energy bounds: {0}")]
    InfeasibleBehaviour(String),
    #[error("solver finished with status {status:?}: {detail}")]
    Solver { status: Status, detail: String },
    #[error("decomposition LP is infeasible: {0}")]
    LpInfeasible(String),
    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("device produced a round behaviour outside the peak-energy quantum set at round {round}: {detail}")]
    DeviceInvariant { round: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl From<SdpError> for Error {
    fn from(e: SdpError) -> Self {
        match e {
            SdpError::IllPosed(msg) => Error::Internal(format!("ill-posed SDP: {msg}")),
            SdpError::Solver { status, detail } => Error::Solver { status, detail },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
