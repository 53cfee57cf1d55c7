use thiserror::Error;

/// Errors raised by the pipeline.
///
/// `Invalid` covers violated preconditions on user-facing inputs,
/// `DimensionGuard` a configured size limit, and `Consistency` a numerical
/// result that left its tolerance band (e.g. a probability of `-1e-6`).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{what} = {value} exceeds the configured limit of {limit}")]
    DimensionGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Tolerance on probabilities before they are clipped into `[0, 1]`.
pub(crate) const PROB_TOL: f64 = 1e-10;

/// Clips `p` into `[0, 1]` if it lies within [`PROB_TOL`] of the interval.
pub(crate) fn checked_prob(p: f64, what: &str) -> Result<f64> {
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
        return Err(Error::Consistency(format!(
            "{what} = {p:e} lies outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}
