use see_core::SeeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("parse error at row {row} (line {line}): {message}")]
    Parse { row: usize, line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] SeeError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
