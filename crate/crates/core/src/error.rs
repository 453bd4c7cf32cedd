use thiserror::Error;

/// Errors raised by the decomposition engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (ranks, sizes, parameters).
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Bad input data (non-finite values, misaligned lengths).
    #[error("data error: {0}")]
    Data(String),
    /// Input columns do not match the fitted model.
    #[error("schema error: {0}")]
    Schema(String),
    /// Dense exact path asked for a problem larger than it supports.
    #[error("size error: {0}")]
    Size(String),
    /// A metric that is undefined for the given input (zero variance etc.).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// Linear algebra failed beyond what regularization could repair.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

/// Failures reading or writing a model archive.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error on model archive: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported archive version `{found}` (this build reads `{expected}`)")]
    Version { found: String, expected: String },
    #[error("archive has no format_version tag")]
    MissingVersion,
    #[error("archive truncated: section `{section}` is missing or incomplete")]
    Truncated { section: String },
    #[error("archive section `{section}` is missing")]
    MissingSection { section: String },
    #[error("corrupt archive: {0}")]
    Corrupt(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
