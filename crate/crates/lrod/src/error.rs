//! Crate-wide error type.

use std::error::Error as StdError;
use std::fmt;

/// Alias for results produced by this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the portfolio/forecasting/optimisation pipeline.
///
/// Variants separate caller mistakes (`Domain`, `Config`) from bad input data
/// (`Schema`, `Data`) and from estimation failures (`Degenerate`, `NonConvergence`),
/// so the CLI can map them onto distinct exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input file does not match the expected column layout.
    Schema(String),
    /// Input rows are structurally valid but inconsistent (named account where possible).
    Data(String),
    /// Generator or run configuration is invalid.
    Config(String),
    /// An argument is outside an operation's documented domain.
    Domain(String),
    /// A sample admits no estimate (e.g. all observations equal).
    Degenerate(String),
    /// An iterative estimator failed to converge; carries the last iterate.
    NonConvergence { what: String, last: f64 },
    /// A scenario cell could not be computed (e.g. empty training sample).
    Scenario(String),
    /// A caller violated an operation's precondition.
    Precondition(String),
    /// Underlying I/O failure, stringified to keep the type cloneable.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate sample: {msg}"),
            Error::NonConvergence { what, last } => {
                write!(f, "{what} did not converge (last iterate {last})")
            }
            Error::Scenario(msg) => write!(f, "scenario error: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl StdError for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}
