use thiserror::Error;

/// Errors raised by codecs, containers and campaigns.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit index {index} out of range for a {width}-bit word")]
    BitIndexOutOfRange { index: u32, width: u32 },

    #[error("chunk size {chunk} does not partition a {total_bits}-bit word (chunk + 1 must divide it)")]
    InfeasibleChunkSize { chunk: u32, total_bits: u32 },

    #[error("unsupported line width {0} (expected 64 or 128)")]
    UnsupportedLineWidth(u32),

    #[error("layout/scheme mismatch: {0}")]
    LayoutMismatch(String),

    #[error("manifest does not match image: {0}")]
    ManifestMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty evaluation set")]
    EmptyEvalSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged after {attempts} attempts")]
    TrainingDiverged { attempts: u32 },

    #[error("malformed container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
