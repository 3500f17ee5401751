use thiserror::Error;

use crate::sdp::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("variable index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("embedding indices must be strictly increasing")]
    UnsortedIndices,

    #[error("relaxation order {order} too small: degree {degree} needs order >= {required}")]
    OrderTooSmall {
        order: u32,
        degree: u32,
        required: u32,
    },

    #[error("target degree {degree} exceeds 2k = {max}")]
    DegreeOverflow { degree: u32, max: u32 },

    #[error("inconsistent clique structure: {0}")]
    CliqueStructure(String),

    #[error("SDP not solved to optimality (status {status:?}){hint}")]
    Solver { status: SolveStatus, hint: String },

    #[error("certificate infeasible at order {order}; try a larger relaxation order")]
    RaiseOrder { order: u32 },

    #[error("malformed SDP: {0}")]
    MalformedSdp(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) => 2,
            Error::Assumption(_) => 3,
            Error::Solver { .. } | Error::RaiseOrder { .. } | Error::MalformedSdp(_) => 4,
            Error::Verification(_) => 5,
            _ => 2,
        }
    }
}
