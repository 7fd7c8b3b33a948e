use thiserror::Error;

/// Errors raised by the model and the experiment harness.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left}-bit id combined with {right}-bit id")]
    DimensionMismatch { left: u32, right: u32 },

    #[error("id length {0} out of range 1..={max}", max = crate::idspace::MAX_BITS)]
    InvalidDimension(u32),

    /// More items were requested than the population holds. `available` saturates at `u64::MAX`.
    #[error("capacity exceeded: requested {requested}, available {available}")]
    Capacity { requested: u64, available: u64 },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse id from {0:?}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
