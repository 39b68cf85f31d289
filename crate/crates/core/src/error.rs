use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible for an operation.
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Misuse of the autodiff tape.
    #[error("backward: {0}")]
    Backward(String),

    /// Input data violates an invariant (negative rainfall, bad units, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// An operation that needs at least one element got none.
    #[error("empty input to {0}")]
    Empty(&'static str),

    /// Rejection sampling would not terminate in practice.
    #[error("tail threshold {0} too large: acceptance probability below 1e-9")]
    TailThreshold(f64),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}
