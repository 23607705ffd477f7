use thiserror::Error;

/// Errors raised anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("numeric failure for individual {id}: {msg}")]
    NumericIndividual { id: String, msg: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error for key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("ingestion error at {file}:{line}: {msg}")]
    Ingestion {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("degenerate chain `{0}`: zero variance in a Geweke window")]
    DegenerateChain(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined rate: {0}")]
    UndefinedRate(String),

    #[error("state left the support: {0}")]
    InvariantViolation(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("block `{block}`: {source}")]
    Block {
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("draw {draw}: {msg}")]
    Draw { draw: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn in_block(self, block: &'static str) -> Self {
        Error::Block {
            block,
            source: Box::new(self),
        }
    }
}
