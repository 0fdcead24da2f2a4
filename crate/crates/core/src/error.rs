use thiserror::Error;

/// Errors raised by the multifractal toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("depth {depth} exceeds the configured maximum {max}")]
    DepthOverflow { depth: usize, max: usize },

    #[error("invalid Bernoulli pair: {0}")]
    InvalidPair(String),

    #[error("invalid phase schedule: {0} (required: 1 = t_0 < t_1 < ⋯)")]
    InvalidSchedule(String),

    #[error("invalid probability {name} = {value}: must lie in (0, 1)")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("r = {r} is inadmissible: the window ln((1-p)/(1-p~)) < r ln((1-p)/p) < ln((1-p)/p~) requires r in ({lo}, {hi})")]
    Inadmissible { r: f64, lo: f64, hi: f64 },

    #[error("alpha = {alpha} lies outside the open interval ({lo}, {hi})")]
    AlphaOutOfRange { alpha: f64, lo: f64, hi: f64 },

    #[error("window [{n_min}, {n_max}] is invalid: need 1 <= n_min < n_max")]
    InvalidWindow { n_min: usize, n_max: usize },

    #[error("measures do not share the same phase schedule")]
    ScheduleMismatch,

    #[error("grid error: {0}")]
    Grid(String),

    #[error("point q = {q} is at or beyond the grid boundary")]
    Boundary { q: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("auxiliary parameters disagree with spectrum row: {0}")]
    Mismatch(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
