use thiserror::Error;

/// Runtime failure of a kernel operation. A tree that raises one of these is
/// treated as an invalid genome, never as a partial score.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalFailure {
    #[error("{op}: argument outside the operator's domain")]
    Domain { op: &'static str },
    #[error("{op}: non-finite result")]
    NonFinite { op: &'static str },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported operand ({detail})")]
    Operand {
        op: &'static str,
        detail: &'static str,
    },
    #[error("slice index {index} out of range for {len} entries")]
    OutOfRange { index: usize, len: usize },
    #[error("matrix is singular even after ridging")]
    Singular,
    #[error("final value is not a scalar (shape {0:?})")]
    NotScalar(Vec<usize>),
    #[error("class {0} has no samples in this context")]
    EmptyPartition(usize),
}

pub type EvalResult<T> = Result<T, EvalFailure>;
