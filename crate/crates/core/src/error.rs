use thiserror::Error;

/// Errors raised by the certification engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("captured posterior mass {captured} is not above 0.5; the median is unbounded by this box family")]
    MedianUnbounded { captured: f64 },

    #[error("classes {0:?} all clear their 0-K thresholds; penalties are inconsistent")]
    InconsistentPenalties(Vec<usize>),

    #[error("regression decision bounds need an output {0} (the identity output range is unbounded)")]
    MissingOutputBound(&'static str),
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
