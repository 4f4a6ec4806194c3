use thiserror::Error;

/// Failures raised by the geometry, solvers and front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("scene has no emitting path")]
    EmptyScene,
    #[error("infeasible: {available} paths observed, at least {required} required")]
    Infeasible { required: usize, available: usize },
    #[error("no reference path with zero TDoA")]
    MissingReference,
    #[error("observation {index} lacks a {what} tag")]
    MissingTag { index: usize, what: &'static str },
    #[error("rank-deficient system (rank {rank} of {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },
    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("quadratic program is infeasible")]
    QpInfeasible,
    #[error("quadratic program is unbounded")]
    QpUnbounded,
    #[error("centroid estimate is not usable for size sensing")]
    InfeasibleCentroid,
    #[error("no matched-filter peak above threshold")]
    NoPeaks,
    #[error("signal count {count} leaves no noise subspace (array size {limit})")]
    SubspaceRank { count: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
