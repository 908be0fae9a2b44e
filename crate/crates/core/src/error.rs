use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("zero has no exponent")]
    ZeroExponent,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid length vector: {0}")]
    InvalidLengths(String),

    #[error("pointer space exhausted: {0} second-level subtables required")]
    PointerSpaceExhausted(usize),

    #[error("symbol {0} absent from code table")]
    SymbolAbsent(u8),

    #[error("truncated stream: decoded {decoded} of {expected} symbols")]
    TruncatedStream { decoded: usize, expected: usize },

    #[error("threads per block must be a power of two in [1, 1024], got {0}")]
    InvalidThreadsPerBlock(u32),

    #[error("format error: {0}")]
    Format(String),

    #[error("tensor {index} ({name}): {source}")]
    Tensor {
        index: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("verification mismatch: tensor {tensor}, T={threads_per_block}, first differing index {index}")]
    Mismatch {
        tensor: String,
        threads_per_block: u32,
        index: usize,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn in_tensor(self, index: usize, name: &str) -> Self {
        Error::Tensor {
            index,
            name: name.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the command-line tool: 1 verification mismatch,
    /// 2 format error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Mismatch { .. } => 1,
            Error::Io(_) => 3,
            Error::Tensor { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
