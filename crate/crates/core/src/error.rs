use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box scale {0}: must be at least 1")]
    InvalidScale(i64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("interaction offset {offset:?} exceeds the declared range {range}")]
    OffsetOutOfRange { offset: Vec<i64>, range: i64 },

    #[error("non-finite potential value at probe point {0:?}")]
    NonFinitePotential(Vec<f64>),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("non-finite state after step at site {site:?} (t = {t})")]
    NonFinite { site: Vec<i64>, t: f64 },

    #[error("blow-up at site {site:?}: local energy {energy:e} exceeds ceiling {ceiling:e} at t = {t}")]
    BlowUp {
        site: Vec<i64>,
        energy: f64,
        ceiling: f64,
        t: f64,
    },

    #[error("site {0:?} is not in the box")]
    SiteOutsideBox(Vec<i64>),

    #[error("box too small: {0}")]
    BoxTooSmall(String),

    #[error("invalid state specification: {0}")]
    InvalidState(String),

    #[error("MCMC acceptance {rate:.3} below 0.10 after tuning")]
    PoorAcceptance { rate: f64 },

    #[error("empty interior: no eligible sites for {0}")]
    EmptyInterior(String),

    #[error("dimension {dim} exceeds the estimator cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("not enough samples: have {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear algebra: {0}")]
    LinearAlgebra(String),

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
