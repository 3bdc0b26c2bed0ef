use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported pixel format {0}; expected 8-bit grayscale, gray+alpha, RGB or RGBA")]
    UnsupportedFormat(String),
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("probability {value} at index {index} is outside [0, 1]")]
    Probability { index: usize, value: f64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("point ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds { x: i64, y: i64, width: u32, height: u32 },
    #[error("pixel ({x}, {y}) is background")]
    BackgroundCenter { x: u32, y: u32 },
    #[error("branch index {index} out of range (graph has {count} branches)")]
    BranchIndex { index: usize, count: usize },
    #[error("severity {0} is outside [0, 1)")]
    Severity(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid phantom spec: {0}")]
    PhantomSpec(String),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Decode { .. } => "decode",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::ZeroArea { .. } => "zero_area",
            Error::BufferSize { .. } => "buffer_size",
            Error::Probability { .. } => "probability",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::BackgroundCenter { .. } => "background_center",
            Error::BranchIndex { .. } => "branch_index",
            Error::Severity(_) => "severity",
            Error::Config(_) => "config",
            Error::PhantomSpec(_) => "phantom_spec",
            Error::Encode(_) => "encode",
            Error::Json { .. } => "json",
        }
    }

    /// Process exit status used by the command-line tool: 2 for I/O, 4 for a
    /// bad phantom spec, 3 for any other invalid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Encode(_) => 2,
            Error::PhantomSpec(_) => 4,
            _ => 3,
        }
    }
}
