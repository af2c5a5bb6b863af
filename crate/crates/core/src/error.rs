use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: {reason}")]
    Domain { op: &'static str, reason: String },

    /// A series was cut off by its term budget before the tail bound met the tolerance.
    #[error("{series} did not converge within {terms} terms (partial sum {partial:e}, tail bound {tail_bound:e})")]
    Convergence {
        series: &'static str,
        terms: usize,
        partial: f64,
        tail_bound: f64,
    },

    /// An alternating sum lost too many digits to cancellation.
    #[error("{series} is ill-conditioned: condition number {condition:e} exceeds {limit:e}")]
    Cancellation {
        series: &'static str,
        condition: f64,
        limit: f64,
    },

    #[error("quadrature exhausted {evaluations} evaluations (estimate {estimate:e}, error {error_estimate:e})")]
    Quadrature {
        estimate: f64,
        error_estimate: f64,
        evaluations: usize,
    },
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical method rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Domain { .. })
    }
}
