use std::io;

use thiserror::Error;

/// Errors raised anywhere in the coherence pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("document too short to permute")]
    DocumentTooShort,

    #[error("ratios must sum to 1")]
    InvalidRatios,

    #[error("corpus has {0} documents; at least 3 are needed to split")]
    CorpusTooSmall(usize),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("embedding file line {line}: {message}")]
    EmbeddingParse { line: usize, message: String },

    #[error("empty embedding file")]
    EmptyEmbeddings,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0}")]
    ModelFormat(#[from] ModelFormatError),

    #[error("document {0} has no valid negative samples")]
    NoNegatives(String),

    #[error("no trainable documents (need at least 3 sentences)")]
    NoTrainableDocuments,

    #[error("no scorable documents (need at least 2 sentences)")]
    NothingToScore,

    #[error("degenerate samples: both groups have zero variance")]
    DegenerateSamples,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Failures while decoding a serialized model.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelFormatError {
    #[error("not an LCD model file")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected end of model file")]
    Truncated,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
