use thiserror::Error;

use crate::sdp::SdpStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem label `{0}` appears more than once")]
    LabelCollision(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("total dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("invalid trace {0}")]
    InvalidTrace(f64),

    #[error("state must be normalized (trace {0})")]
    NotNormalized(f64),

    #[error("pure state is not unit norm (norm {0})")]
    NotUnitNorm(f64),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("map is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),

    #[error("map is not completely positive (min Choi eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),

    #[error("semidefinite program failed with status {status:?}: {context}")]
    Sdp { status: SdpStatus, context: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
