use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes: expected \"NTD1\"")]
    BadMagic,

    #[error("truncated payload for tensor `{tensor}`: need {needed} bytes, {available} available")]
    TruncatedPayload {
        tensor: String,
        needed: usize,
        available: usize,
    },

    #[error("{trailing} trailing bytes after the last tensor payload")]
    TrailingBytes { trailing: usize },

    #[error("shape mismatch in tensor `{tensor}`: {detail}")]
    ShapeMismatch { tensor: String, detail: String },

    #[error("non-finite value in tensor `{tensor}` at flat index {index}")]
    NonFiniteValue { tensor: String, index: usize },

    #[error("invalid NTD header: {0}")]
    InvalidHeader(String),

    #[error("invalid dump: {0}")]
    InvalidDump(String),

    #[error("I/O failure: {0}")]
    IoFailure(#[from] io::Error),

    #[error("layer `{layer}` has no `{tensor}` tensor")]
    MissingAuxTensor { layer: String, tensor: String },

    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),

    #[error("cannot take {k} indices out of {n} scores")]
    KTooLarge { k: usize, n: usize },

    #[error("geometric median did not converge after {iterations} iterations")]
    NonConverged { iterations: usize, last: Vec<f64> },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-positive entry at index {index}")]
    NonPositiveEntry { index: usize },

    #[error("mean of scores is not positive ({mean})")]
    NonPositiveMean { mean: f64 },

    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("covariance matrix is not positive definite")]
    NonPositiveDefinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer `{layer}`: {source}")]
    InLayer {
        layer: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_layer(self, layer: &str) -> Error {
        match self {
            e @ Error::InLayer { .. } => e,
            e => Error::InLayer {
                layer: layer.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The error with any layer annotation peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::InLayer { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by the caller's input (malformed files, missing
    /// tensors, bad parameters) as opposed to failures of a computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self.root(),
            Error::NonConverged { .. }
                | Error::DegenerateInput(_)
                | Error::NonPositiveMean { .. }
                | Error::NonPositiveDefinite
        )
    }
}
