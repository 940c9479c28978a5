use thiserror::Error;

/// Errors produced by dataset handling, the solvers and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("feature {feature} has no observed entries")]
    EmptyFeature { feature: usize },

    #[error("sample {sample} has no observed entries")]
    EmptySample { sample: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
