//! Shared error type. Numeric code returns `Result` instead of panicking so
//! the CLI can map failures onto distinct exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two fields that must share a grid (or a role) do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An input value is outside the operator's domain (nonpositive weight,
    /// query point off the grid, exponent out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed validation before any numerics ran.
    #[error("config error: {0}")]
    Config(String),

    /// The plate touched the channel floor; the graph map degenerates.
    #[error("contact: min eta = {min_eta:.3e} fell below floor {floor:.3e} at t = {time:.6}")]
    Contact { time: f64, min_eta: f64, floor: f64 },

    /// An iterative solver ran out of iterations.
    #[error("solver failure in {context}: residual {residual:.3e} after {iterations} iterations (tolerance {tolerance:.1e})")]
    Solver {
        context: String,
        residual: f64,
        iterations: usize,
        tolerance: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
