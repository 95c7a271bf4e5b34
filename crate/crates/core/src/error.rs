use thiserror::Error;

use crate::params::Branch;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("branch {branch} is unstable: psi = {psi} (must lie in (0, 1))")]
    UnstableBranch { branch: Branch, psi: f64 },
    #[error("{name} must be a positive finite number, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("branch {branch} needs at least one channel")]
    ZeroChannels { branch: Branch },
    #[error("{0} must be at least one")]
    ZeroCount(&'static str),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("a simulation needs at least one job")]
    NoJobs,
    #[error("warmup fraction must lie in [0, 1), got {0}")]
    BadWarmup(f64),
    #[error("scripted time source ran out of {0} values")]
    ScriptExhausted(&'static str),
    #[error("nothing was observed")]
    EmptyObservation,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("the stationary solver handles single-channel branches only (got n_a = {n_a}, n_b = {n_b})")]
    NotSingleServer { n_a: u32, n_b: u32 },
    #[error("q_max must be at least {min}, got {got}")]
    GridTooSmall { min: usize, got: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("relaxation factor must lie in (0, 2), got {0}")]
    BadRelaxation(f64),
    #[error("no convergence after {0} sweeps")]
    NoConvergence(usize),
    #[error("truncation at q_max = {q_max} leaves mass {mass:e} on the boundary (budget {budget:e})")]
    TruncationTooSmall { q_max: usize, mass: f64, budget: f64 },
    #[error("conditional rate undefined: every region in the denominator has zero mass")]
    DegenerateDenominator,
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("need at least {needed} events, got {got}")]
    TooFewEvents { needed: usize, got: usize },
    #[error("interval series has zero variance")]
    ZeroVariance,
    #[error("rate must be a positive finite number, got {0}")]
    NonPositiveRate(f64),
    #[error("intervals must be finite and non-negative (index {index}: {value})")]
    NegativeInterval { index: usize, value: f64 },
    #[error("timestamps must be non-decreasing (line {line})")]
    Unordered { line: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("rho must be finite and non-negative, got {0}")]
    InvalidRho(f64),
    #[error("load psi must lie in (0, 1), got {0}")]
    UnstableLoad(f64),
    #[error("channel count must be at least one")]
    ZeroChannels,
}

/// Umbrella error for callers that drive several stages at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used in JSON error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Params(_) => "params",
            Error::Sim(_) => "simulation",
            Error::Solve(_) => "solver",
            Error::Stat(_) => "statistics",
            Error::Analytics(_) => "analytics",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
