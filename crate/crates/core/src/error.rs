use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("gain table: {0}")]
    GainTable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("disconnected: {0}")]
    Disconnected(String),

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error("calibration fingerprint mismatch: scenario expects {expected}, table has {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
