//! Error types shared across the pipeline.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable capture {path}: {reason}")]
    UnreadableCapture { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("unknown application label {0:?}")]
    UnknownApp(String),

    #[error("unknown browser label {0:?}")]
    UnknownBrowser(String),

    #[error("codec error: {0}")]
    Codec(#[from] CodecError),

    #[error("handshake has no ServerHello; excluded from the dataset")]
    IncompleteHandshake,

    #[error("feature schema cannot be built from an empty record collection")]
    EmptySchema,

    #[error("row has {got} values but the schema has {expected} columns")]
    RowLengthMismatch { expected: usize, got: usize },

    #[error("record {0} has no label")]
    UnlabeledRecord(usize),

    #[error("gini impurity is undefined for an all-zero count vector")]
    EmptyCounts,

    #[error("training data is empty")]
    EmptyTrainingData,

    #[error("training data contains a single class; nothing to separate")]
    SingleClass,

    #[error("k must be at least 2 for cross-validation (got {0})")]
    BadFoldCount(usize),

    #[error("class {class} has only {size} members, fewer than k = {k}")]
    ClassSmallerThanK {
        class: String,
        size: usize,
        k: usize,
    },

    #[error("identifier search requires all four application classes (missing {0})")]
    MissingClass(String),

    #[error("unknown transform {0:?}")]
    UnknownTransform(String),

    #[error("synthesis profile error: {0}")]
    Profile(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Wire-level parse/encode failures for the DTLS codec.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("empty payload")]
    EmptyPayload,

    #[error("not a DTLS record: unknown content type {content_type} at offset {offset}")]
    NotDtls { content_type: u8, offset: usize },

    #[error(
        "truncated record at offset {offset}: declared {declared} bytes, {available} available"
    )]
    TruncatedRecord {
        offset: usize,
        declared: usize,
        available: usize,
    },

    #[error("truncated handshake body at offset {offset}")]
    TruncatedBody { offset: usize },

    #[error("inconsistent fragment fields: offset {fragment_offset} + length {fragment_length} exceeds message length {length}")]
    BadFragment {
        fragment_offset: u32,
        fragment_length: u32,
        length: u32,
    },

    #[error("{field} is {got} bytes, exceeding the wire limit of {limit}")]
    FieldTooLong {
        field: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("cipher suite list has odd byte length {0}")]
    OddCipherSuiteLength(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
