//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDiverged { epoch: usize, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("matrix width {width} not divisible into {segments} segments")]
    IndivisibleWidth { width: usize, segments: usize },

    #[error("invalid cluster count: {0}")]
    InvalidK(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("malformed idx data: {0}")]
    MalformedIdx(String),

    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
