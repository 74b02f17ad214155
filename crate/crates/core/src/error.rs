use thiserror::Error;

/// Errors raised by the filtering primitives and experiment runners.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("singular covariance")]
    SingularCovariance,
    #[error("degenerate weights")]
    DegenerateWeights,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty mixture")]
    EmptyMixture,
    #[error("grid evaluation supports 2D only")]
    GridNot2D,
    #[error("grid mismatch")]
    GridMismatch,
    #[error("posterior off-grid")]
    PosteriorOffGrid,
    #[error("invalid unscented scaling")]
    InvalidUnscentedScaling,
    #[error("negative UT weight in probabilistic sum")]
    NegativeUtWeight,
    #[error("singular primary distance")]
    SingularPrimaryDistance,
    #[error("target coincides with sensor")]
    TargetAtSensor,
    #[error("declination singularity")]
    DeclinationSingularity,
    #[error("integration budget exhausted")]
    IntegrationBudgetExhausted,
    #[error("degenerate ensemble")]
    DegenerateEnsemble,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch}: {source}")]
    AtEpoch { epoch: usize, source: Box<Error> },
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn at_epoch(self, epoch: usize) -> Self {
        Error::AtEpoch {
            epoch,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
