//! Benchmark harness: scenario files, Monte Carlo sweeps and CSV reports.

pub mod bench;
pub mod config;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
