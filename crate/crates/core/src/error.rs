use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("estimation error at node {node}: {reason}")]
    Estimation { node: usize, reason: String },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("lambda selection failed: {0}")]
    Selection(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
