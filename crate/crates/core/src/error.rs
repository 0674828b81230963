use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("CFL number {cfl} outside (0, 1]")]
    Cfl { cfl: f64 },

    #[error("containment violated: need L >= R0 + t_end + 4dx = {required}, have L = {half_width}")]
    Containment { required: f64, half_width: f64 },

    #[error("non-finite values encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("phi table covers r <= {r_max}, {needed} required")]
    TableCoverage { r_max: f64, needed: f64 },

    #[error("phi table must reach r_max >= {required} for this check, has {r_max}")]
    TableTooShort { r_max: f64, required: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("nonpositive value {value} at t = {t}")]
    NonPositive { t: f64, value: f64 },

    #[error("{0} requires a linear trajectory (nonlinearity = none)")]
    NonlinearTrajectory(&'static str),

    #[error("t = {t} lies below the equivalence threshold {threshold}")]
    BelowThreshold { t: f64, threshold: f64 },

    #[error("invalid time interval: t = {t} precedes s0 = {s0}")]
    TimeOrder { s0: f64, t: f64 },

    #[error("data not supported in (-{radius}, {radius})")]
    DataSupport { radius: f64 },

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error("sign condition not satisfied: integral = {0}")]
    SignCondition(f64),

    #[error("exponents not subcritical: mu0 * (p - 1) = {0} >= 2")]
    NotSubcritical(f64),

    #[error("all runs censored")]
    AllCensored,

    #[error("{0}")]
    Config(#[from] crate::harness::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
