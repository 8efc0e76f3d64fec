use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("feature index {index} out of bounds on line {line} (dimension {dimension})")]
    Bounds {
        line: usize,
        index: i64,
        dimension: usize,
    },

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("negative value {value} for feature {feature} in instance {instance}")]
    NegativeValue {
        instance: usize,
        feature: usize,
        value: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported model format version: {0}")]
    Version(String),

    #[error("dimension {requested} exceeds dense limit {limit}")]
    DenseLimit { requested: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimizer invariant violated: {0}")]
    Internal(String),

    #[error("training diverged: {0}")]
    Diverged(String),
}
