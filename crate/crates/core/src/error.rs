use thiserror::Error;

/// Errors raised by the estimators, bounds and simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the domain of {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no root: {0}")]
    NoRoot(String),

    /// The deterministic constants of the kurtosis-prior scheme violate the
    /// admissibility condition. `max_feasible_steps` is the largest number of
    /// mean/variance rounds that would still be admissible with the same
    /// per-step budgets (0 when even the first round fails).
    #[error(
        "inadmissible kurtosis schedule: {detail} (max admissible rounds: {max_feasible_steps})"
    )]
    Admissibility {
        detail: String,
        max_feasible_steps: usize,
    },

    #[error("empty interval family: {0}")]
    EmptyFamily(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        invalid(format!("{name} must lie in (0, 1), got {p:?}"))
    }
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        invalid(format!("{name} must be finite and > 0, got {x:?}"))
    }
}
