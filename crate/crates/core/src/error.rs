use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The conditional likelihood carries no information about the common parameter.
    #[error("common parameter not identified: {0}")]
    Identification(String),

    #[error("outcome-space reduction unsupported: {0}")]
    UnsupportedReduction(String),

    /// The sharp identified-set program has no solution at any slack up to the cap.
    #[error("identified-set program infeasible at slack {slack:e}; minimal feasible slack is {min_slack:e}")]
    Infeasible { slack: f64, min_slack: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bound program for unit {unit} hit the iteration limit")]
    IterationLimit { unit: usize },

    #[error("estimation failed on half-sample {half}: {source}")]
    HalfSample {
        half: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input rather than failed numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::UnsupportedReduction(_) => true,
            Error::HalfSample { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
