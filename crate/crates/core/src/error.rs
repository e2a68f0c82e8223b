//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants are grouped by the
//! subsystem that raises them; the CLI maps them onto exit codes (see
//! `main.rs`).

use std::fmt;

/// Errors raised by geometry, dynamics, verification, and I/O paths.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An evaluator produced a non-finite value outside of time integration.
    NumericalFailure(String),
    /// Time integration produced a non-finite state. `last_valid` is the index
    /// of the last finite sample (0 = the initial state).
    Divergence { last_valid: usize },
    /// Mass matrix is not symmetric positive definite, or has the wrong shape.
    Metric(String),
    /// Constraint compatibility matrix is singular or too ill-conditioned to
    /// solve for multipliers (includes rank-deficient constraint matrices).
    SingularCompatibility(String),
    /// A horizontal frame is rank-deficient or not tangent to the constraint
    /// distribution.
    Frame(String),
    /// The Lagrangian is not invariant along the fibers of the bundle, so the
    /// reduced system is ill-defined.
    InvarianceViolation(String),
    /// A vector field's base components depend on the fiber coordinates, so it
    /// does not descend to the base manifold.
    NotProjectable(String),
    /// Invalid configuration, model parameters, or malformed input.
    Config(String),
    /// File I/O failure while reading configs or writing outputs.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
            Error::Divergence { last_valid } => {
                write!(
                    f,
                    "integration diverged; last finite sample index {last_valid}"
                )
            }
            Error::Metric(msg) => write!(f, "metric error: {msg}"),
            Error::SingularCompatibility(msg) => {
                write!(f, "singular compatibility matrix: {msg}")
            }
            Error::Frame(msg) => write!(f, "horizontal frame error: {msg}"),
            Error::InvarianceViolation(msg) => {
                write!(f, "fiber invariance violation: {msg}")
            }
            Error::NotProjectable(msg) => write!(f, "field not projectable: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
