use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes; the CLI maps each to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Math,
    Other,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("bad magic bytes: expected AEMB")]
    BadMagic,

    #[error("unsupported AEMB version {0}")]
    VersionMismatch(u32),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("dimension overflow: {rows} x {cols}")]
    DimensionOverflow { rows: u64, cols: u64 },

    #[error("invalid backend id: {0}")]
    BadBackendId(String),

    #[error("unsupported audio format in {path}: {reason}")]
    UnsupportedAudio { path: PathBuf, reason: String },

    #[error("zero-length audio: {0}")]
    EmptyAudio(PathBuf),

    #[error("no eligible windows")]
    NoEligibleWindows,

    #[error("insufficient eligible windows: requested {requested}, eligible {eligible} (shortfall {shortfall})", shortfall = requested - eligible)]
    InsufficientWindows { requested: usize, eligible: usize },

    #[error("row/manifest mismatch: {rows} embedding rows vs {pairs} manifest pairs")]
    RowManifestMismatch { rows: usize, pairs: usize },

    #[error("need at least {needed} items, got {actual}")]
    TooFew { needed: usize, actual: usize },

    #[error("zero-variance input")]
    ZeroVariance,

    #[error("requested {requested} components but effective rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("undefined score: both distances are zero")]
    UndefinedScore,

    #[error("matrix square root failed to converge")]
    SqrtFailed,

    #[error("all paired differences are ties")]
    AllTies,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Config(_) => ErrorKind::Config,
            UndefinedScore | SqrtFailed | ZeroVariance | RankDeficient { .. } | AllTies => {
                ErrorKind::Math
            }
            BadMagic
            | VersionMismatch(_)
            | Truncated(_)
            | DimensionOverflow { .. }
            | BadBackendId(_)
            | UnsupportedAudio { .. }
            | EmptyAudio(_)
            | NoEligibleWindows
            | InsufficientWindows { .. }
            | RowManifestMismatch { .. }
            | Io { .. }
            | Wav(_)
            | Csv(_) => ErrorKind::Data,
            _ => ErrorKind::Other,
        }
    }
}
