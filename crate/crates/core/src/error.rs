use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("submodel {submodel} requires an input but none was supplied")]
    MissingInput { submodel: usize },

    #[error("submodel {submodel} takes no input but one was supplied")]
    UnexpectedInput { submodel: usize },

    #[error("input has dimension {got}, expected {expected}")]
    InputDimension { expected: usize, got: usize },

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fitter {family} cannot be used with this dataset: {reason}")]
    IncompatibleData { family: &'static str, reason: String },

    #[error("resample mode {mode} is not available for fitter {family}")]
    IncompatibleMode { mode: &'static str, family: &'static str },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("configurations {first} and {second} share every submodel level")]
    UnsplittableNode { first: usize, second: usize },

    #[error("model failed at configuration {config}, replication {replication}: {message}")]
    ModelFailure {
        config: usize,
        replication: usize,
        message: String,
    },

    #[error("state {state} has no observed KPI")]
    MissingObservation { state: usize },

    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),

    #[error("no feasible routing action")]
    NoFeasibleAction,

    #[error("bagged variance is zero for submodel {submodel}")]
    DivisionByZero { submodel: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
