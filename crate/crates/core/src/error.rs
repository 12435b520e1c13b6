use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("population of {actual} agents is too small, need at least {needed}")]
    PopulationTooSmall { needed: u64, actual: u64 },
    #[error("no worker agents to sample")]
    EmptyWorkerPool,
    #[error("population of {actual} agents exceeds the exact-oracle limit of {limit}")]
    OracleTooLarge { limit: u64, actual: u64 },
    #[error("chain is not absorbing: leak rate {0} > 0")]
    NotAbsorbing(f64),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("sample count exceeded the cap of {cap}")]
    SampleCapExceeded { cap: u64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
