use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command-line front end to pick an exit
/// code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration: config file, weights, embedder/prototype mismatch.
    Config,
    /// Bad or missing data: manifests, frames, unknown users or videos.
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("malformed PNM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PNM maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
    #[error("truncated PNM payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("schema violation in {path} at {pointer}: {message}")]
    SchemaViolation {
        path: PathBuf,
        pointer: String,
        message: String,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("cannot decode {}: {source}", path.display())]
    Decode { path: PathBuf, source: Box<Error> },
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error(
        "insufficient frames: {num_frames} frame(s) cannot hold a clip of length {clip_length}"
    )]
    InsufficientFrames {
        num_frames: usize,
        clip_length: usize,
    },

    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("frame {width}x{height} is too small for a 3x3 edge detector")]
    FrameTooSmall { width: usize, height: usize },

    #[error("cannot embed an empty clip")]
    EmptyClip,
    #[error("missing embedding for frame {index} of video {video_id}")]
    MissingFrameEmbedding { video_id: String, index: usize },
    #[error("inconsistent embedding dimension in {context}: expected {expected}, found {found}")]
    InconsistentDim {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch in field {0}")]
    ShapeMismatch(String),

    #[error("class {0} has no clip embeddings")]
    EmptyClass(String),
    #[error("length mismatch: {predicted} predictions vs {expected} ground-truth labels")]
    LengthMismatch { predicted: usize, expected: usize },
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown video {0:?}")]
    UnknownVideo(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DimensionMismatch(_) | Error::ShapeMismatch(_) | Error::Config(_) => {
                ErrorKind::Config
            }
            _ => ErrorKind::Data,
        }
    }
}
