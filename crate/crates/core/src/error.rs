use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter a = {0} is outside [0, 2]")]
    ParamOutOfRange(f64),

    #[error("point {0} is outside [-1, 1]")]
    Domain(f64),

    #[error("invalid hole: {0}")]
    InvalidHole(String),

    #[error("cell index {k} is below k0 = {k0}")]
    CellIndex { k: i32, k0: u32 },

    #[error("{what} exceeded the cap of {cap}")]
    CapExceeded { what: &'static str, cap: usize },

    #[error("class M clause ({clause}) violated: {detail}")]
    ClassM { clause: char, detail: String },

    #[error("assumption {name} failed: {detail}")]
    Assumption { name: &'static str, detail: String },

    #[error("seed interval: {0}")]
    Seed(String),

    #[error("reference cover: {0}")]
    Tiling(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("hole family: {0}")]
    HoleFamily(String),

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl Error {
    /// Whether the error comes from invalid input rather than from a
    /// computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ParamOutOfRange(_)
                | Error::Domain(_)
                | Error::InvalidHole(_)
                | Error::HoleFamily(_)
                | Error::Config { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
