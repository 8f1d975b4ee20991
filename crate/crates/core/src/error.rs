use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed binary input; `offset` is the byte where decoding stopped.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// Malformed line-oriented input (JSON Lines, CSV); `line` is 1-based.
    #[error("parse error on line {line}: {msg}")]
    Line { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A graph or tensor contract was violated.
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was invoked before its prerequisites were computed.
    #[error("state error: {0}")]
    State(String),

    /// A referenced input (file, image id) is missing.
    #[error("missing input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}
