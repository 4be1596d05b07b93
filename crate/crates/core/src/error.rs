use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid affinity: {0}")]
    InvalidAffinity(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("degenerate conditional row {row}: normalizer underflowed to zero")]
    DegenerateRow { row: usize },

    #[error("affinity underflow: p[{i}][{j}] = 0 after symmetrization")]
    AffinityUnderflow { i: usize, j: usize },

    #[error("perplexity {target} not attainable for row {row} (attainable range [{lo}, {hi}])")]
    NotBracketed { row: usize, target: f64, lo: f64, hi: f64 },

    #[error("requires n > s+1, got n = {n}, s = {s}")]
    DimensionConstraint { n: usize, s: usize },

    #[error("parameter {name} = {value} out of range {interval}")]
    ParameterOutOfRange { name: String, value: f64, interval: String },

    #[error("insufficient samples: {found} in window, need at least {needed}")]
    InsufficientSamples { found: usize, needed: usize },

    #[error("nonpositive value {value} at t = {t} in log-log fit")]
    NonpositiveValue { t: f64, value: f64 },

    #[error("configuration has zero diameter")]
    ZeroDiameter,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}
