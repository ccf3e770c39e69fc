use thiserror::Error;

/// Errors surfaced by dataset loading, model (de)serialization and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("schema has no label column")]
    MissingLabel(String),
    #[error("row {row}: category `{value}` not declared for column `{column}`")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: unknown label value `{value}`")]
    UnknownLabel { row: usize, value: String },
    #[error("dataset is empty{0}")]
    EmptyDataset(&'static str),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("sample has {got} columns, schema expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("model format error: {0}")]
    ModelFormat(String),
    #[error("model version {got} unsupported (expected {expected})")]
    ModelVersion { expected: u32, got: u32 },
    #[error("model was trained against a different schema (fingerprint mismatch)")]
    SchemaFingerprint,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0} requires a binary classification task with a designated positive label")]
    NotBinary(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
