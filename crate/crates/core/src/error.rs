use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid activation parameters a={a}, b={b}: {reason}")]
    InvalidActivation { a: f64, b: f64, reason: &'static str },

    #[error("{name}={value} is outside the domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("{0} is undefined for a linear activation (delta = 0)")]
    LinearActivation(&'static str),

    #[error("inverse cosine distance map diverges at w={0} (zeta vanished)")]
    Divergence(f64),

    #[error("sigma={sigma} is not the edge-of-chaos value {expected}")]
    NotAtEdgeOfChaos { sigma: f64, expected: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0} has zero norm")]
    ZeroNorm(usize),

    #[error("dataset contains parallel points {0:?}")]
    ParallelPoints(Vec<(usize, usize)>),

    #[error("dataset contains repeated points {0:?}")]
    RepeatedPoints(Vec<(usize, usize)>),

    #[error("could not draw a nondegenerate dataset after {0} attempts")]
    DegenerateSample(usize),

    #[error("cosine of pair ({i}, {j}) reached 1 before layer {layer}")]
    EntryOverflow { i: usize, j: usize, layer: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("bracketing failed: {0}")]
    Bracketing(String),

    #[error("n={n} exceeds the cap {cap} for {what}")]
    TooLarge { n: usize, cap: usize, what: &'static str },

    #[error("parse error: {0}")]
    Parse(String),
}
