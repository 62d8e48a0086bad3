use std::io;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parameter layout mismatch")]
    LayoutMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no free cell left for a transmitter after {attempts} placement attempts")]
    NoFreeCell { attempts: usize },

    #[error("need at least {needed} maps to partition, have {available}")]
    TooFewMaps { needed: usize, available: usize },

    #[error("client {0} has an empty shard")]
    EmptyShard(usize),

    #[error("nothing to aggregate")]
    EmptyUpdates,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("need at least {needed} traces, have {available}")]
    TooFewTraces { needed: usize, available: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
