use thiserror::Error;

/// Errors raised by the estimator, its uncertainty machinery and the file formats around it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a density or parameterization.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke a precondition (misaligned lengths, n = 0, level outside (0,1), ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Every convolved-kernel likelihood underflowed for this observation.
    #[error("degenerate observation y = {y}: likelihood underflows to zero for every atom")]
    DegenerateObservation { y: f64 },

    /// The y-quadrature window does not capture enough predictive mass.
    #[error("quadrature window [{low}, {high}] captures predictive mass {captured:.12}, below 1 - 1e-8")]
    WindowMass { low: f64, high: f64, captured: f64 },

    /// Too many log-of-zero terms were skipped during learning-rate calibration.
    #[error("calibration at gamma = {gamma}: skipped {skipped} of {total} terms (more than 5%)")]
    CalibrationSkips { gamma: f64, skipped: usize, total: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Malformed configuration text or option value.
    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    /// Malformed observation input.
    #[error("data error at line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config {
        line: None,
        msg: msg.into(),
    }
}

pub(crate) fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(domain(format!("{what} must be finite, got {x}")))
    }
}
