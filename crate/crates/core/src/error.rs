use std::io;

use thiserror::Error;

/// Errors produced anywhere in the freespace pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} channel(s), got {actual}")]
    InvalidChannels { expected: usize, actual: usize },

    #[error("image {width}x{height} is too small (need at least {min}x{min})")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("pixel ({u}, {v}) outside {width}x{height} map")]
    Index {
        u: i64,
        v: i64,
        width: usize,
        height: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undistortion diverged at pixel ({u:.3}, {v:.3})")]
    Distortion { u: f64, v: f64 },

    #[error("pixel ray at or above the horizon")]
    AboveHorizon,

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("segmenter backend failed: {0}")]
    Backend(String),

    #[error("segmenter backend timed out after {0} ms")]
    BackendTimeout(u64),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidChannels { .. } => "InvalidChannels",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::Index { .. } => "IndexError",
            Error::Config(_) => "ConfigError",
            Error::Distortion { .. } => "DistortionError",
            Error::AboveHorizon => "AboveHorizon",
            Error::Camera(_) => "CameraError",
            Error::Backend(_) => "BackendError",
            Error::BackendTimeout(_) => "BackendTimeout",
            Error::Protocol(_) => "ProtocolError",
            Error::Shape(_) => "ShapeError",
            Error::Domain(_) => "DomainError",
            Error::Scene(_) => "SceneError",
            Error::Format { .. } => "FormatError",
            Error::Frame { source, .. } => source.kind(),
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

/// Io error carrying the offending path in its message.
pub(crate) fn io_at(path: &std::path::Path, err: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(err.kind(), format!("{}: {err}", path.display())))
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
