//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Failure cases surfaced by the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input carried a non-finite entry or malformed data.
    InvalidInput(String),
    /// Dimension mismatch between a system and its arguments.
    DimensionMismatch { expected: usize, got: usize },
    /// A weighting table is not strictly decreasing in (0, 1] with w0 = 1.
    InvalidWeighting(String),
    /// A lag or truncation depth exceeds the window depth.
    DepthExceeded { depth: usize, requested: usize },
    /// The requested operation is not defined for this family.
    Unsupported(String),
    /// Regular state-affine systems need a bounded input domain.
    UnboundedDomain,
    /// The matrix is not nilpotent within the allowed number of powers.
    NotNilpotent,
    /// The provided trajectory does not solve the reservoir recursion.
    NotASolution { residual: f64 },
    /// The operation needs a certified contraction certificate first.
    CertificateRequired,
    /// Picard iteration did not reach the tolerance within `max_iter`.
    NoConvergence { residual: f64, iterations: usize },
    /// Filter states are missing or belong to a different input window.
    StaleState,
    /// The base point of a kernel extraction must be a constant window.
    InvalidBasePoint,
    /// The window norm lies outside the ball on which the bound holds.
    OutsideDomain { norm: f64, radius: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidWeighting(msg) => write!(f, "invalid weighting sequence: {msg}"),
            Error::DepthExceeded { depth, requested } => {
                write!(f, "depth exceeded: window depth {depth}, requested {requested}")
            }
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::UnboundedDomain => {
                write!(f, "regular state-affine systems need a bounded input domain")
            }
            Error::NotNilpotent => write!(f, "matrix is not nilpotent"),
            Error::NotASolution { residual } => {
                write!(f, "trajectory is not a solution: residual {residual:e}")
            }
            Error::CertificateRequired => {
                write!(f, "a certified contraction certificate is required")
            }
            Error::NoConvergence { residual, iterations } => {
                write!(f, "no convergence after {iterations} sweeps: residual {residual:e}")
            }
            Error::StaleState => write!(f, "filter states unavailable or stale"),
            Error::InvalidBasePoint => write!(f, "base point must be a constant window"),
            Error::OutsideDomain { norm, radius } => {
                write!(f, "window norm {norm} outside the ball of radius {radius}")
            }
        }
    }
}

impl core::error::Error for Error {}
