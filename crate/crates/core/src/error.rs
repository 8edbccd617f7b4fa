use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("theta = {theta} is outside the cumulant domain ({lo}, {hi})")]
    ThetaOutOfDomain { theta: f64, lo: f64, hi: f64 },

    #[error("speed a = {0} is not attained by the cumulant derivative on its domain")]
    SpeedOutOfRange(f64),

    #[error("root finder did not converge: {0}")]
    NoConvergence(String),

    #[error("p = {p} is not above the lower exponent {p_lower}")]
    BelowDomain { p: f64, p_lower: f64 },

    #[error("configuration of {size} points exceeds the cap of {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("population of {size} exceeds the cap of {cap}")]
    PopulationCap { size: usize, cap: usize },

    #[error("model has no exact Palm kernel: {0}")]
    UnsupportedPalm(String),

    #[error("x = {0} is not an atom of the intensity")]
    XNotInSupport(f64),

    #[error("Z(theta) is not finite for a sampled configuration at theta = {0}")]
    NonFiniteSample(f64),

    #[error("grid window too small: relative mass loss {loss:e} exceeds {tolerance:e}")]
    WindowOverflow { loss: f64, tolerance: f64 },

    #[error("no product-expectation strategy for this model: {0}")]
    UnsupportedModel(String),

    #[error("grid miss rate {rate:e} exceeds {limit:e}")]
    GridMiss { rate: f64, limit: f64 },

    #[error("speed is not subcritical: rate function {0} <= 0")]
    NotSubcritical(f64),

    #[error("tilted step law is degenerate (variance {0})")]
    DegenerateWalk(f64),

    #[error("martingale evaluated on a pruned state (pruned mass {0:e})")]
    PruningBias(f64),

    #[error("dislocation model has no size-biased structure: {0}")]
    UnsupportedSizeBiased(String),

    #[error("dislocation measure is {0}-geometric")]
    GeometricModel(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
