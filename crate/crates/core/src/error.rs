//! Error type shared across the crate.

use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Invalid configuration (bad bounds, zero sizes, ...).
    Config(&'static str),
    /// A vector or matrix did not have the expected size.
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// NMSE is undefined for an all-zero reference signal.
    ZeroSignal,
    /// Gradient ascent produced a non-finite iterate (step too large).
    Diverged { iter: usize },
    /// A network layer produced a non-finite intermediate value.
    NonFiniteLayer { layer: usize },
    /// A forward trace does not belong to the network it was replayed on.
    TraceMismatch(&'static str),
    /// Training loss became non-finite.
    TrainDiverged { epoch: usize, step: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::DimMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch: {what}: expected {expected}, got {got}"),
            Error::ZeroSignal => write!(f, "NMSE undefined: reference signal has zero norm"),
            Error::Diverged { iter } => {
                write!(f, "gradient ascent diverged at iteration {iter}")
            }
            Error::NonFiniteLayer { layer } => {
                write!(f, "non-finite activation in network layer {layer}")
            }
            Error::TraceMismatch(msg) => write!(f, "forward trace mismatch: {msg}"),
            Error::TrainDiverged { epoch, step } => {
                write!(f, "training diverged at epoch {epoch} (optimizer step {step})")
            }
        }
    }
}

impl core::error::Error for Error {}
