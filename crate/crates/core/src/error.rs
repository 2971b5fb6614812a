//! Error type shared across the core crate.

use alloc::string::String;
use core::fmt;

/// Errors emitted by the core pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum CoreError {
    /// A tensor operation received incompatible shapes.
    Shape(String),
    /// An index (token id, codebook index, layer index, ...) was out of range.
    Index(String),
    /// A configuration value is invalid (geometry, keeping ratio, stage order, ...).
    Config(String),
    /// Input data violates a precondition (empty dataset, mismatched pair, ...).
    Data(String),
    /// An interleave plan references segments incorrectly.
    Plan(String),
    /// A sequence exceeds the model's maximum length.
    Capacity(String),
    /// A non-finite value appeared where one must not.
    NonFinite(String),
    /// An internal invariant was violated (freeze mask, checksum audit, ...).
    Invariant(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape(m) => write!(f, "shape error: {m}"),
            CoreError::Index(m) => write!(f, "index error: {m}"),
            CoreError::Config(m) => write!(f, "configuration error: {m}"),
            CoreError::Data(m) => write!(f, "data error: {m}"),
            CoreError::Plan(m) => write!(f, "plan error: {m}"),
            CoreError::Capacity(m) => write!(f, "capacity error: {m}"),
            CoreError::NonFinite(m) => write!(f, "non-finite value: {m}"),
            CoreError::Invariant(m) => write!(f, "invariant violation: {m}"),
        }
    }
}

#[cfg(any(feature = "std", test))]
impl std::error::Error for CoreError {}
