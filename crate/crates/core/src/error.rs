use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("segment {0} is not peripheral")]
    NotPeripheral(String),

    #[error("no path from {from} to {to}")]
    NoPath { from: String, to: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed network document: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("delay ledger corrupted: accumulated {accumulated} < entry snapshot {entry}")]
    LedgerCorrupt { accumulated: f64, entry: f64 },

    #[error("phase request rejected: controller is in {0} stage")]
    RejectedRequest(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no results to select from")]
    EmptyResults,

    #[error("comparison requires a baseline result")]
    MissingBaseline,

    #[error("unknown algorithm token {0:?} (valid tokens: baseline, dt1, dt2)")]
    UnknownAlgorithm(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
