use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a pricing or scaling function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The target price admits no volatility inside the no-arbitrage bounds.
    #[error("no implied volatility: {0}")]
    NoSolution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected} inputs, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("cannot load model from {path}: {message}")]
    ModelLoad { path: PathBuf, message: String },

    /// Training produced a non-finite loss or gradient.
    #[error(
        "training diverged at epoch {epoch}, batch {batch}: loss {loss}, gradient norm {grad_norm}"
    )]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
        grad_norm: f64,
    },

    /// Calibration cannot aggregate (no quotes, or every weight vanished).
    #[error("calibration degenerate: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
