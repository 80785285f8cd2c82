use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid refinement spec: {0}")]
    Spec(String),

    #[error("level {level} has {size} pixels, fewer than the coarse window size {n_csz}")]
    LevelTooSmall { level: usize, size: usize, n_csz: usize },

    #[error("final size {target} is unreachable; nearest achievable sizes are {below:?} and {above:?}")]
    Unreachable {
        target: usize,
        below: Option<usize>,
        above: Option<usize>,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{what} failed (level {level:?}, window {window:?}, coarse {coarse:?}, fine {fine:?})")]
    Factorization {
        what: &'static str,
        level: Option<usize>,
        window: Option<usize>,
        coarse: Vec<f64>,
        fine: Vec<f64>,
    },

    #[error("kernel matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}, trace {trace:e}")]
    KernelValidity { min_eigenvalue: f64, trace: f64 },

    #[error("matrix not factorizable even after adding jitter {jitter:e}")]
    NotFactorizable { jitter: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("size {n} exceeds the dense limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("no candidate refinement shape reaches the requested size")]
    NoReachableCandidate,

    #[error("evaluation error: {0}")]
    Evaluation(String),
}
