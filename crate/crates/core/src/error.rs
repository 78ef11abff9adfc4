//! Error type shared by all simulator modules.

use thiserror::Error;

/// Errors surfaced by the signal-processing and protocol layers.
#[derive(Debug, Error)]
pub enum SimError {
    /// An input had the wrong length or dimensions.
    #[error("input shape mismatch: {0}")]
    InputShape(String),

    /// A parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Element-wise division hit a zero transmit symbol.
    #[error("division domain error: transmit grid contains a zero entry at ({0}, {1})")]
    DivisionDomain(usize, usize),

    /// Not enough independent snapshots to separate signal and noise subspaces.
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    /// No target-like peak was available where one was required.
    #[error("absent target: {0}")]
    AbsentTarget(String),

    /// Tracked geometry collapsed (e.g. range fell to zero or below).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A matrix that must be inverted was numerically singular.
    #[error("numerical conditioning: {0}")]
    NumericalConditioning(String),

    /// A scenario or experiment configuration could not be used.
    #[error("config error: {0}")]
    Config(String),

    /// File I/O while reading configs or writing reports.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
