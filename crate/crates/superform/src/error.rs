//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("bidegree mismatch: ({0},{1}) vs ({2},{3})")]
    BidegreeMismatch(u8, u8, u8, u8),

    #[error("multi-indices must be pairwise disjoint")]
    NonDisjointIndices,

    #[error("dimension {0} out of range (1..=16)")]
    DimensionOutOfRange(usize),

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("singular Lefschetz-power matrix (internal failure for an SPD metric)")]
    SingularLefschetz,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("adjoint of d undefined for p = 0")]
    AdjointOfZeroDegree,

    #[error("input form is not closed: |d beta| = {residual:.3e} exceeds {tol:.3e}")]
    NotClosed { residual: f64, tol: f64 },

    #[error("conjugate gradient stagnated after {iterations} iterations (residual {residual:.3e})")]
    CgStagnation { iterations: usize, residual: f64 },

    #[error("conjugate gradient did not reach tolerance in {maxiter} iterations (residual {residual:.3e})")]
    CgMaxIter { maxiter: usize, residual: f64 },

    #[error("certified estimate constant is not positive: {0}")]
    NonPositiveBound(f64),

    #[error("weight is not flagged convex")]
    NotConvex,

    #[error("weight is not {0}-homogeneous: max Euler residual {1:.3e}")]
    NotHomogeneous(f64, f64),

    #[error("gradient-map image escapes the field domain at {count} points (first: {first:?})")]
    ImageOutOfDomain { count: usize, first: Vec<f64> },

    #[error("legendre supremum attained on the grid boundary at {count} dual points (domain too small)")]
    SupOnBoundary { count: usize },

    #[error("solve stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed SFF1 stream: {0}")]
    SffFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Tag an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
