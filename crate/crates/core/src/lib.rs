//! Deterministic simulator of a fragmented two-exchange market with a
//! latency arbitrageur, plus the experiment runner and bootstrap tooling
//! used to test replication results.

pub mod cli;
pub mod engine;
pub mod exchange;
pub mod experiment;
pub mod market;
pub mod metrics;
pub mod security;
pub mod sip;
pub mod stats;
pub mod traders;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("experiment {experiment} mixture {mixture} run {run}: {message}")]
    Run {
        experiment: String,
        mixture: usize,
        run: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
