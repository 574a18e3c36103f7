use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square or has non-finite entries: {0}")]
    InvalidMatrix(String),
    #[error("drift is not stable: eigenvalue of -Λ with real part {max_real_part:e} >= -1e-10")]
    NotStable { max_real_part: f64 },
    #[error("initial datum has norm {0:e} <= 1e-14")]
    ZeroInitialDatum(f64),
    #[error("e^(λt) overflows for λt = {0}; use the scaled residual")]
    Overflow(f64),
    #[error("epsilon {0} is not in (0,1)")]
    InvalidEpsilon(f64),
    #[error("scale function is non-positive at t = {0}")]
    NonPositiveScale(f64),
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),
    #[error("grids do not match: {0}")]
    GridMismatch(String),
    #[error("density integrates to {0}, not 1 within 1e-6")]
    NotNormalized(f64),
    #[error("frequency grid violates the Nyquist condition: {0}")]
    NyquistViolation(String),
    #[error("clipping negative density removed {0:e} mass")]
    NegativeMass(f64),
    #[error("p = {p} is not below the stability index α = {alpha}")]
    MomentViolation { p: f64, alpha: f64 },
    #[error("sample sets have different sizes ({0} vs {1})")]
    UnequalCounts(usize, usize),
    #[error("exact assignment limited to n <= 2048, got {0}")]
    TooLargeForExact(usize),
    #[error("limit law has a singular covariance")]
    SingularLimitLaw,
    #[error("both circulant embedding and Cholesky failed: {0}")]
    EmbeddingFailure(String),
    #[error("quadrature did not reach tolerance {tol:e} (estimate {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },
    #[error("grid too coarse: quadrature error estimate {0:e} exceeds 1e-4")]
    GridTooCoarse(f64),
    #[error("covariance tail {0:e} at horizon exceeds tolerance")]
    SlowDecay(f64),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{name}` out of range: {reason}")]
    InadmissibleRange { name: String, reason: String },
    #[error("no exact marginal law for family {0}")]
    NoExactLaw(String),
    #[error("cut-off time t = {t} <= 0 at r = {r} (epsilon too large for the r range)")]
    NegativeTime { r: f64, t: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
