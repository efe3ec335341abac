use thiserror::Error;

pub type Result<T> = std::result::Result<T, ExpError>;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown experiment `{name}`; valid names: {}", valid.join(", "))]
    UnknownExperiment { name: String, valid: Vec<&'static str> },

    #[error("sigma^2 = {sigma_sq} is inconsistent with 2/beta = {two_over_beta}; set allow_sigma_mismatch to override")]
    SigmaMismatch { sigma_sq: f64, two_over_beta: f64 },

    #[error("report was produced by {found}, this is {expected}; refusing to replay")]
    VersionMismatch { expected: String, found: String },

    #[error(transparent)]
    Core(#[from] polymerlab_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
