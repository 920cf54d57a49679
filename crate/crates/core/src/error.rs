use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The caller asked for something inconsistent (bad flag, bad config).
    Config,
    /// An input the caller pointed at is absent, unreadable or malformed.
    MissingData,
    /// A value produced internally broke one of its own invariants.
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid prompt template {0:?}: it must contain exactly one `{{}}` placeholder")]
    InvalidTemplate(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("invalid scoring config: {0}")]
    InvalidConfig(String),
    #[error(
        "KTooLarge: requested k={k} but the decoder output for {image_id:?} only stores {stored_k} words per position"
    )]
    KTooLarge {
        image_id: String,
        k: usize,
        stored_k: usize,
    },
    #[error("target index {index} out of range for vocabulary of size {vocab} at position {position}")]
    IndexOutOfRange {
        position: usize,
        index: usize,
        vocab: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid decoder output for {image_id:?}: {reason}")]
    InvalidDecoderOutput { image_id: String, reason: String },
    #[error("no image embedding for {0:?}")]
    MissingImage(String),
    #[error("no decoder output for image {0:?}")]
    MissingDecoderOutput(String),
    #[error("no text embedding for label {label:?} (prompt {prompt:?})")]
    MissingTextEmbedding { label: String, prompt: String },
    #[error("seen label list is empty")]
    EmptySeen,
    #[error("duplicate label {0:?} (labels are compared case-insensitively)")]
    DuplicateLabel(String),
    #[error("invalid counts for openness: n_train={n_train}, n_target={n_target}, n_test={n_test}")]
    InvalidCounts {
        n_train: usize,
        n_target: usize,
        n_test: usize,
    },
    #[error("AUROC needs both seen and unseen outcomes, got {n_unseen} unseen and {n_seen} seen")]
    OneClassOnly { n_unseen: usize, n_seen: usize },
    #[error("empty list")]
    EmptyList,
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid split {name:?}: {reason}")]
    InvalidSplit { name: String, reason: String },
    #[error("bad magic: expected \"ZOSDEMB1\", found {0:?}")]
    BadMagic(String),
    #[error("truncated embedding store: {0}")]
    TruncatedFile(String),
    #[error("embedding store has {0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("vector {key:?} has L2 norm {norm}, expected 1 within 1e-4")]
    NormViolation { key: String, norm: f64 },
    #[error("store key is not valid UTF-8")]
    InvalidUtf8,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidTemplate(_)
            | InvalidLabel(_)
            | InvalidConfig(_)
            | KTooLarge { .. }
            | InvalidCounts { .. }
            | EmptySeen
            | DuplicateLabel(_) => ErrorClass::Config,
            MissingImage(_)
            | MissingDecoderOutput(_)
            | MissingTextEmbedding { .. }
            | InvalidDecoderOutput { .. }
            | InvalidSplit { .. }
            | OneClassOnly { .. }
            | BadMagic(_)
            | TruncatedFile(_)
            | TrailingBytes(_)
            | DuplicateKey(_)
            | NormViolation { .. }
            | InvalidUtf8
            | Io { .. }
            | Json { .. } => ErrorClass::MissingData,
            ZeroVector
            | NonFinite
            | DimMismatch { .. }
            | EmptyInput
            | IndexOutOfRange { .. }
            | ShapeMismatch(_)
            | EmptyList
            | OutOfRange(_) => ErrorClass::Invariant,
        }
    }
}
