//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the simulation library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's domain (negative speed,
    /// mismatched lengths, zero pilot, ...).
    Domain(String),
    /// A configuration is internally inconsistent (Doppler beyond Nyquist,
    /// empty tap profile, bad horizon grid, ...).
    Config(String),
    /// Vector/matrix dimensions do not line up.
    Shape(String),
    /// Training produced a non-finite loss or gradient.
    Divergence(String),
    /// A least-squares fit has a degenerate (all-zero) regressor system.
    FitFailed(String),
    /// A lookup table was built for a different model.
    FingerprintMismatch { expected: u64, actual: u64 },
    /// Malformed serialized model or table.
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Shape(m) => write!(f, "shape mismatch: {m}"),
            Error::Divergence(m) => write!(f, "training diverged: {m}"),
            Error::FitFailed(m) => write!(f, "fit failed: {m}"),
            Error::FingerprintMismatch { expected, actual } => write!(
                f,
                "model fingerprint mismatch: table built for {expected:016x}, model is {actual:016x}"
            ),
            Error::Format(m) => write!(f, "format error: {m}"),
        }
    }
}

impl std::error::Error for Error {}
