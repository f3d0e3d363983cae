use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario generation failed: could not place vehicle {vehicle} after {attempts} attempts")]
    Generation { vehicle: usize, attempts: usize },

    #[error("non-finite gradient (norm {norm})")]
    NonFiniteGradient { norm: f64 },

    #[error("replay buffer holds {available} transitions, {requested} requested")]
    InsufficientReplay { available: usize, requested: usize },

    #[error("replay index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
