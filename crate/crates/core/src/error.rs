use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("failed to encode image: {0}")]
    Encode(String),
    #[error("invalid raster dimensions {width}x{height} for {len} samples")]
    InvalidDimensions { width: u32, height: u32, len: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("image has {distinct} distinct colors, fewer than k = {k}")]
    TooFewDistinctColors { k: usize, distinct: usize },
    #[error("cluster index {index} out of range for k = {k}")]
    InvalidClusterIndex { index: usize, k: usize },
    #[error("foreground cluster set is empty")]
    EmptyForeground,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("disk diameter must be odd and positive, got {0}")]
    EvenOrNonPositiveDiameter(i64),

    #[error("confusion counts are empty")]
    EmptyCounts,
    #[error("no metric rows to average")]
    EmptyRowSet,

    #[error("dataset root not found: {0}")]
    RootNotFound(PathBuf),
    #[error("no images found under {0}")]
    NoImagesFound(PathBuf),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("no configuration for species {0}")]
    MissingConfig(String),
    #[error("species id {0} out of range 1..=33")]
    InvalidSpecies(u32),
    #[error("unsupported config schema version {0}")]
    SchemaVersion(u32),

    #[error("patch size {size} larger than image {width}x{height}")]
    PatchLargerThanImage { size: u32, width: u32, height: u32 },
    #[error("shift ({dx}, {dy}) too large for {width}x{height} patch")]
    ShiftTooLarge {
        dx: i32,
        dy: i32,
        width: u32,
        height: u32,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
