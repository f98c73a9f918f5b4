use std::io;

use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare {
        rows: usize,
        row: usize,
        cols: usize,
    },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("entry ({i}, {j}) = {value} is not 0 or 1")]
    NonBinaryEntry { i: usize, j: usize, value: i64 },
    #[error("diagonal entry ({i}, {i}) is nonzero")]
    NonZeroDiagonal { i: usize },

    #[error("community id {id} at node {node} is outside 1..={k}")]
    LabelOutOfRange { node: usize, id: usize, k: usize },
    #[error("community count must be at least 1")]
    ZeroCommunities,
    #[error("community {community} is empty")]
    EmptyCommunity { community: usize },
    #[error("community {community} has a single node; its diagonal block cannot be estimated")]
    SingletonDiagonalBlock { community: usize },
    #[error("node {node} has no peers in community {community}")]
    DegenerateBlock { node: usize, community: usize },
    #[error("community counts differ: {left} vs {right}")]
    KMismatch { left: usize, right: usize },
    #[error("sizes differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("block matrix entry ({u}, {v}) = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { u: usize, v: usize, value: f64 },
    #[error("probability matrix is not symmetric at ({i}, {j})")]
    AsymmetricProbability { i: usize, j: usize },
    #[error("within-community probability r(1+c) = {value} exceeds 1")]
    ProbabilityOverflow { value: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    EigenFailure { iterations: usize },
    #[error("all sample values are equal; Gumbel fit is degenerate")]
    DegenerateSample,
    #[error("Gumbel fit did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("every candidate K up to {k_max} was rejected")]
    SearchExhausted { k_max: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("value {value} at ({i}, {j}) is out of range: {message}")]
    Range {
        i: usize,
        j: usize,
        value: f64,
        message: String,
    },
    #[error("node index {index} is outside 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("degree filter removed every node")]
    AllNodesRemoved,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of an iterative numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailure { .. } | Error::NoConvergence { .. } | Error::DegenerateSample
        )
    }
}
