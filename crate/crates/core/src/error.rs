use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("probability out of range: {0}")]
    ProbabilityOutOfRange(f64),

    #[error("detection probability is zero")]
    ZeroClickProbability,

    #[error("{0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("tag stream: {0}")]
    Stream(String),

    #[error("malformed tag data at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("estimate unavailable: {0}")]
    Estimate(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
