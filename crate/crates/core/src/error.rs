use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires d = 2, configuration has d = {0}")]
    PlanarOnly(usize),

    #[error("point {index} duplicates an existing point")]
    DuplicatePoint { index: usize },

    #[error("point lies outside the sampling window")]
    OutsideWindow,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("largest connected component has {size} vertices, dense cap is {cap}; use the closed-walk route for polynomials")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("closed-walk count exceeded 2^53; result is no longer exact")]
    WalkOverflow,

    #[error("spectral range error: c * max|lambda| = {0:.1} exceeds 700")]
    SpectralRange(f64),

    #[error("quadrature diverged: {0}")]
    Divergence(String),

    #[error("not stabilized within the available region: {0}")]
    NotStabilized(String),

    #[error("local neighborhood has {size} points, enumeration guard is {limit}")]
    EnumerationGuard { size: usize, limit: usize },

    #[error("surjection enumeration capped at p' <= {cap}, requested {requested}")]
    SurjectionCap { requested: usize, cap: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("cost guard: estimated {estimated} inner evaluations exceeds limit {limit}")]
    CostGuard { estimated: u64, limit: u64 },

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config: {0}")]
    ConfigInvalid(String),

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
