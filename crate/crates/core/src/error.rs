use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("lattice window is empty")]
    EmptyWindow,

    #[error("site ({k}, {n}) lies outside the window {window}")]
    WindowExit { k: i64, n: i64, window: String },

    #[error("row mismatch: kernel ends at row {kernel_row}, continuation starts at row {requested}")]
    RowMismatch { kernel_row: i64, requested: i64 },

    #[error("coupling parameters not admissible: {0}")]
    Inadmissible(String),

    #[error("sampler gave up after {retries} retries: {what}")]
    SamplerExhausted { what: &'static str, retries: usize },

    #[error("piecewise-linear function is invalid: {0}")]
    InvalidFunction(String),

    #[error("theta family with k_max={k_max} cannot serve a block of size {block}")]
    FamilyTooSmall { k_max: usize, block: usize },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
