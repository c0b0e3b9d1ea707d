use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document. `line`/`column` are 1-based.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("coordinate ({lon}, {lat}) is outside the validity zone of EPSG:{crs}")]
    OutOfZone { lon: f64, lat: f64, crs: u32 },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("throttled by {endpoint}: rate limit exceeded")]
    Throttled { endpoint: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sizing error on {element}: no catalog cable carries {required_a:.1} A")]
    Sizing { element: String, required_a: f64 },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("singular fault at bus {bus}: zero path impedance")]
    SingularFault { bus: usize },

    #[error("generation failed in stage `{stage}`: {message}")]
    Generation { stage: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn generation(stage: &'static str, msg: impl Into<String>) -> Self {
        Error::Generation {
            stage,
            message: msg.into(),
        }
    }
}
