use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the recovery library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("spike train needs at least 2 spikes for a pairwise distance, got {0}")]
    TooFewSpikes(usize),

    #[error("cannot place {k} spikes in [0,1]^{d} with separation > {epsilon} within {attempts} draws")]
    PackingInfeasible {
        k: usize,
        d: usize,
        epsilon: f64,
        attempts: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("lattice of {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("residue is zero: no atom to select")]
    ZeroResidue,

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
