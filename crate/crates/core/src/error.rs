use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("vertices {0:?} and {1:?} are not adjacent")]
    NotAdjacent(crate::lattice::Site, crate::lattice::Site),
    #[error("vertex {0:?} is not in the lattice")]
    UnknownVertex(crate::lattice::Site),
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("linear solver did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("size cap exceeded: {0}")]
    TooLarge(String),
    #[error("max attempts exhausted after {attempts} attempts ({accepted} accepted)")]
    AttemptsExhausted { attempts: u64, accepted: u64 },
    #[error("conditioning event has zero mass")]
    EmptyEvent,
    #[error("truncation tail bound {bound:e} exceeds tolerance {tol:e}")]
    TailBound { bound: f64, tol: f64 },
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
