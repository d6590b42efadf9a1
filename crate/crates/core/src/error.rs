use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("branch {branch} has zero series impedance (r = x = 0)")]
    ZeroImpedance { branch: usize },

    #[error("invalid grid case: {0}")]
    InvalidCase(String),

    #[error("branch id {branch} out of range (case has {n_branch} branches)")]
    BranchOutOfRange { branch: usize, n_branch: usize },

    #[error("branch {0} is already out of service")]
    BranchAlreadyCut(usize),

    #[error("case parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("Newton-Raphson did not converge after {iterations} iterations (max mismatch {mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian: pivot {pivot:.3e} at column {column}")]
    SingularJacobian { column: usize, pivot: f64 },

    #[error("grid is islanded: {unreached} bus(es) unreachable from the slack bus")]
    IslandedGrid { unreached: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("case has no non-slack generator to dispatch")]
    NoGenerators,

    #[error("discard rate {rate:.1}% exceeds 50% ({discarded} of {attempts} attempts); check the sampling configuration")]
    DiscardRateExceeded {
        discarded: usize,
        attempts: usize,
        rate: f64,
    },

    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("record {instance_id} has no cut branch")]
    MissingCut { instance_id: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
