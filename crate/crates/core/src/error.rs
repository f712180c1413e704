use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A numerical routine failed to reach its tolerance.
    #[error("numeric failure in {op}: {detail} (error estimate {estimate:e})")]
    Numeric {
        op: &'static str,
        detail: String,
        estimate: f64,
    },

    /// A Gibbs/MH step produced a non-finite or invalid intermediate value.
    #[error("chain error at unit {unit:?}, step {step}: {detail}")]
    Chain {
        unit: Option<usize>,
        step: &'static str,
        detail: String,
    },

    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, detail: impl Into<String>, estimate: f64) -> Self {
        Error::Numeric {
            op,
            detail: detail.into(),
            estimate,
        }
    }

    pub(crate) fn chain(unit: Option<usize>, step: &'static str, detail: impl Into<String>) -> Self {
        Error::Chain {
            unit,
            step,
            detail: detail.into(),
        }
    }
}

/// Rejects anything that is not a finite, strictly positive number.
pub(crate) fn ensure_positive(op: &'static str, name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} must be finite and > 0, got {x}")))
    }
}
