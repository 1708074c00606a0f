use std::fmt;

use kbc_core::KbcError;

/// Bad input or configuration, detected before or instead of computing.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// A verification oracle did not pass.
#[derive(Debug)]
pub struct OracleFailed;

impl fmt::Display for OracleFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("one or more verification oracles failed")
    }
}

impl std::error::Error for OracleFailed {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<OracleFailed>() {
            return 3;
        }
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(k) = cause.downcast_ref::<KbcError>() {
            return match k {
                KbcError::Parse { .. }
                | KbcError::UnknownSymbol { .. }
                | KbcError::DimensionMismatch(_)
                | KbcError::IndexOutOfRange { .. }
                | KbcError::Config(_)
                | KbcError::Unsupported(_)
                | KbcError::BadCache { .. }
                | KbcError::BadCheckpoint { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}
