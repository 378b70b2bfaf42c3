use thiserror::Error;

use crate::psd::SpdMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows} rows, row {row} has {cols} entries)")]
    NotSquare {
        rows: usize,
        row: usize,
        cols: usize,
    },

    #[error("matrix has no rows")]
    Empty,

    #[error("matrix contains a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),

    #[error("matrix is not symmetric: asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e}")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("function undefined: {0}")]
    DomainError(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{weights} weights for {matrices} matrices")]
    ArityMismatch { weights: usize, matrices: usize },

    #[error("mean needs at least one input matrix")]
    NoInputs,

    #[error("invalid spectrum interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },

    #[error("invalid weights: {0}")]
    BadWeights(String),

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("the deforming mean must not be the left trivial mean")]
    SigmaIsLeftTrivial,

    #[error("the mean must not be a trivial mean")]
    TrivialMean,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Option<Box<SpdMatrix>>,
    },

    #[error("power mean exponent must be nonzero")]
    AlphaZero,

    #[error("power mean exponent {0} outside [-1, 1]")]
    BadAlpha(f64),

    #[error("comparison hypothesis fails (margin {margin:e})")]
    HypothesisFails { margin: f64 },

    #[error("Karcher mean escapes the power mean enclosure (lower {lower:e}, upper {upper:e})")]
    CertificationFailure { lower: f64, upper: f64 },

    #[error("solver invariant violated at iteration {iteration}: {detail}")]
    SolverInvariant { iteration: usize, detail: String },

    #[error("Kantorovich ratio must exceed 1, got {0}")]
    BadH(f64),

    #[error("exponent r = {r} outside {expected}")]
    BadR { r: f64, expected: &'static str },

    #[error("input {index} escapes the spectral bounds [{m}, {big_m}] (spectrum [{lo}, {hi}])")]
    BoundsViolated {
        index: usize,
        m: f64,
        big_m: f64,
        lo: f64,
        hi: f64,
    },

    #[error("mean is not sandwiched between harmonic and arithmetic means (margin {margin:e})")]
    SandwichFails { margin: f64 },

    #[error("mean has no weight vector")]
    NoWeights,

    #[error("unknown search mode `{0}`")]
    BadMode(String),

    #[error("unknown kind `{0}`")]
    UnknownKind(String),

    #[error("unknown inequality `{0}`")]
    UnknownInequality(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::DomainError(msg.into())
    }
}
