use thiserror::Error;

/// Errors raised while building, analyzing or solving GW programs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwError {
    #[error("distance matrix is not square: {rows} rows, row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },

    #[error("measure has {measure} entries but the distance matrix has {points} points")]
    LengthMismatch { points: usize, measure: usize },

    #[error("distance matrix is asymmetric at ({i}, {k}): {a} vs {b}")]
    AsymmetricDistance { i: usize, k: usize, a: f64, b: f64 },

    #[error("nonzero diagonal entry {value} at index {i}")]
    NonzeroDiagonal { i: usize, value: f64 },

    #[error("negative or non-finite distance {value} at ({i}, {k})")]
    NegativeDistance { i: usize, k: usize, value: f64 },

    #[error("measure is not on the simplex: {reason}")]
    MeasureNotSimplex { reason: String },

    #[error("points {i} and {k} are at zero distance")]
    DuplicatePoints { i: usize, k: usize },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("curve samples {index} and {next} coincide", next = .index + 1)]
    DuplicateConsecutiveSamples { index: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("index ({i}, {j}) out of range for a {m}x{n} product space")]
    IndexOutOfRange { i: usize, j: usize, m: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("exponent p must be a finite real >= 1, got {0}")]
    InvalidExponent(f64),

    #[error("value must be nonnegative, got {0}")]
    NegativeValue(f64),

    #[error("matrix is not symmetric at ({i}, {k})")]
    NotSymmetric { i: usize, k: usize },

    #[error("need at least two points in each space (got {m} and {n})")]
    TooFewPoints { m: usize, n: usize },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("initial coupling is infeasible: {0}")]
    InfeasibleInit(String),

    #[error("entropic kernel underflow even in log domain (epsilon = {epsilon})")]
    NumericalUnderflow { epsilon: f64 },

    #[error("oracle requires (m-1)(n-1) = 1, got m = {m}, n = {n}")]
    WrongDimension { m: usize, n: usize },

    #[error("coupling polytope has {dof} degrees of freedom; the grid oracle handles at most {max}")]
    TooManyDof { dof: usize, max: usize },

    #[error("grid resolution {resolution} is below the minimum of {min}")]
    ResolutionTooSmall { resolution: usize, min: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, GwError>;

impl From<std::io::Error> for GwError {
    fn from(e: std::io::Error) -> Self {
        GwError::Io(e.to_string())
    }
}
