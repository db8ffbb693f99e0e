use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("sample size must be positive")]
    EmptySample,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("cumulative hazard cannot be inverted at {0}")]
    NotInvertible(f64),
    #[error("target event fraction {target} unattainable (reachable range [{low}, {high}])")]
    UnattainableTarget { target: f64, low: f64, high: f64 },
    #[error("degenerate profile likelihood: no events")]
    NoEvents,
    #[error("dataset has the wrong censoring scheme for this engine")]
    SchemeMismatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("weights must be positive and finite")]
    InvalidWeights,
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("profile evaluation failed at theta = {theta:?}")]
    Evaluation {
        theta: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite profile likelihood")]
    NonFinite,
    #[error("information matrix is singular or not positive definite")]
    SingularInformation,
    #[error("every candidate point failed to evaluate")]
    AllCandidatesFailed,
}

impl Error {
    pub(crate) fn at(theta: &[f64], source: Error) -> Self {
        Error::Evaluation {
            theta: theta.to_vec(),
            source: Box::new(source),
        }
    }

    pub(crate) fn arg(msg: &str) -> Self {
        Error::InvalidArgument(String::from(msg))
    }
}
