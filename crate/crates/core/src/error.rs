use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("non-positive solution value u = {u:e} at r = {r:e}")]
    NonPositiveU { r: f64, u: f64 },

    #[error("field evaluated at r = 0; use the series start instead")]
    ZeroRadius,

    #[error(
        "series seed radius {r_seed:e} too large: truncation estimate {estimate:e} exceeds {tol:e}"
    )]
    SeedTooLarge {
        r_seed: f64,
        estimate: f64,
        tol: f64,
    },

    #[error("step size underflow at r = {r:e} (h = {h:e})")]
    StepUnderflow { r: f64, h: f64, u: f64, v: f64 },

    #[error("tolerance unreachable: {0}")]
    ToleranceUnreachable(String),

    #[error("radius {0:e} is not a sample of the trajectory")]
    SampleNotFound(f64),

    #[error("classifier does not change sign over the scanned range of beta")]
    NoBracket,

    #[error("iteration limit ({0}) reached")]
    MaxIterations(usize),

    #[error("trajectory is not classified as global: {0}")]
    NotGlobal(String),

    #[error("degenerate state at r = {r:e}: {reason}")]
    DegenerateState { r: f64, reason: String },

    #[error("root finder did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("fit spread {spread:e} exceeds bound {bound:e}")]
    PoorFit { spread: f64, bound: f64 },

    #[error("growth constant is zero; second-order regime undefined")]
    KappaZero,

    #[error("q = {0} outside the admissible range for this formula")]
    OutOfRegime(f64),

    #[error("q = {0} outside (1, 3)")]
    OutOfRange(f64),

    #[error("phase path has not converged: {0}")]
    NotConverged(String),

    #[error("scaling undefined for q = {0}")]
    DegenerateScaling(f64),

    #[error("beta = {beta} is not above the threshold {beta_star}")]
    BelowThreshold { beta: f64, beta_star: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("cache i/o: {0}")]
    Cache(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
