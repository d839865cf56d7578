use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed image: {0}")]
    Format(String),

    #[error("image dimensions {width}x{height} must both be even")]
    OddDimension { width: u32, height: u32 },

    #[error("expected {expected} channel(s), found {found}")]
    Channel { expected: u8, found: u8 },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("patch index {index} out of range for {count} patches")]
    Index { index: usize, count: usize },

    #[error("frame truncated: {missing} more byte(s) needed")]
    Truncation { missing: usize },

    #[error("unsupported frame: {0}")]
    Version(String),

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("no patches were received, cannot fill")]
    EmptyFrame,

    #[error("camera has a singular ground-plane homography")]
    DegenerateCamera,

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("frame {frame}, camera {camera}: {source}")]
    FrameInput {
        frame: u32,
        camera: u16,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
