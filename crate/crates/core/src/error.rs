use thiserror::Error;

/// Errors raised anywhere in the search engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdpError {
    #[error("non-finite logits")]
    NonFiniteLogits,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("power iteration could not draw a non-zero start vector")]
    ZeroStartVector,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite activation at cell {cell}, node {node}")]
    NonFiniteActivation { cell: usize, node: usize },

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("set exhausted: {0} set has no active samples")]
    SetExhausted(&'static str),

    #[error("insufficient history for sample {id}: missing epoch {epoch}")]
    InsufficientHistory { id: usize, epoch: usize },

    #[error("unknown constraint family: {0}")]
    UnknownFamily(String),

    #[error("invalid genotype: {0}")]
    InvalidGenotype(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BdpError {
    fn from(e: std::io::Error) -> Self {
        BdpError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BdpError>;
