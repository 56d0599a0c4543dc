use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (‖M − M†‖_F = {deviation:.3e} > {tolerance:.3e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("invalid qubit support: {0}")]
    InvalidSupport(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis is rank deficient: rank {rank} < {required} required")]
    RankDeficient { rank: usize, required: usize },

    #[error("target lies outside the span of the basis (least-squares residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("noise channel must be CPTP on {expected} qubit(s)")]
    NotCptp { expected: usize },

    #[error("operation cannot be sampled: {0}")]
    NotSampleable(String),

    #[error("rescaled expectation undefined: evolved trace is zero")]
    ZeroTrace,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
