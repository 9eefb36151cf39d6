use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The state left the region where the equations of motion are defined.
    #[error("dynamics domain violation: {0}")]
    Domain(String),

    #[error("dynamics domain violation at t = {t:.3} s: {reason}")]
    DomainAt { t: f64, reason: String },

    #[error("non-finite derivative at step {step} (t = {t:.3} s)")]
    NonFinite { step: usize, t: f64 },

    #[error("matrix is not Hurwitz: {0}")]
    NotHurwitz(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("reference generation failed: {0}")]
    Reference(String),

    #[error("insufficient log resolution: {0}")]
    Resolution(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported or malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
