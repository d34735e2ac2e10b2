use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown code `{0}`")]
    UnknownCode(String),
    #[error("ontology contains a cycle through `{0}`")]
    CyclicOntology(String),
    #[error("requested {requested} tasks but only {available} eligible codes")]
    TooManyTasks { requested: usize, available: usize },
    #[error("need at least {needed} distinct event times, found {found}")]
    NotEnoughDistinctTimes { needed: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: validation loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
