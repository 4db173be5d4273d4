use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigenvalue iteration did not converge after {iterations} sweeps ({unconverged} of {order} eigenvalues unresolved)")]
    NoConvergence {
        iterations: usize,
        unconverged: usize,
        order: usize,
    },

    #[error("non-finite value encountered at t = {t}")]
    Blowup { t: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("configuration rejected by check `{check}`: {reason}")]
    ConfigRejected { check: &'static str, reason: String },

    #[error("gain synthesis failed: max Re eig(A_a) = {margin:e} is not negative")]
    SynthesisFailed { margin: f64 },

    #[error("state matrix A is not Hurwitz: max Re eig(A) = {margin:e}")]
    UnstableA { margin: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(reason: impl Into<String>) -> Self {
        Error::Dimension(reason.into())
    }
}
