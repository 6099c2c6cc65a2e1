use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state spaces do not match: {0} vs {1}")]
    SpaceMismatch(String, String),

    #[error("non-finite value: {what} at {at}")]
    NonFinite { what: String, at: String },

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient error: {what} at t={t}, y={y}")]
    Coefficient { what: String, t: f64, y: f64 },

    #[error("CFL violation: dt={dt} exceeds stability bound {bound} (h={h}, max sigma^2={sigma_sq})")]
    CflViolation { dt: f64, bound: f64, h: f64, sigma_sq: f64 },

    #[error("scheme failure: {0}")]
    SchemeFailure(String),

    #[error("unknown setting: {0}")]
    UnknownSetting(String),

    #[error("no declared spectrum for setting {0}")]
    MissingSpectrum(String),

    #[error("unsupported for this model: {0}")]
    UnsupportedModel(String),

    #[error("degenerate sub-ensemble: {0}")]
    DegenerateSubensemble(String),

    #[error("configuration invalid:\n  {}", issues.join("\n  "))]
    Config { issues: Vec<String> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
