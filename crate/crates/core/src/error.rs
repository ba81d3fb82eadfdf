use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for `op`.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// The operation is undefined for the given input (empty tensor, single-class AUC, ...).
    Domain(String),
    InvalidArgument(String),
    Config(String),
    /// A layer was asked to run in a state it does not support yet.
    State(String),
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
    },
    /// Checkpoint bytes failed validation. No partial model is ever produced.
    Checkpoint(String),
    /// A sample source failed to produce an image.
    Source(String),
}

impl Error {
    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config(msg) => write!(f, "invalid model config: {msg}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
            Error::Source(msg) => write!(f, "sample source: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
