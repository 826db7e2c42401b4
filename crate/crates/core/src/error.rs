use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series diverges: nu = 0 requires lambda < 1 (got lambda = {lambda})")]
    Divergent { lambda: f64 },

    #[error("dependence parameter delta[{j},{k}] = {delta} outside feasible interval ({lower}, {upper})")]
    InfeasibleDelta {
        j: usize,
        k: usize,
        delta: f64,
        lower: f64,
        upper: f64,
    },

    #[error("kernel term is not positive ({0}); parameters are infeasible")]
    NonPositiveKernel(f64),

    #[error("support too wide to simulate: {0}")]
    SupportTooWide(String),

    #[error("truncation point exceeded cap K = {cap} for component {component}")]
    TruncationCap { component: usize, cap: usize },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("reciprocal normalizing constants are not available in this cache")]
    MissingReciprocalZ,

    #[error("no feasible starting point after {0} prior draws")]
    Initialization(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
