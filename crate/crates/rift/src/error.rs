//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the matching pipeline and its I/O.
#[derive(Debug, Error)]
pub enum RiftError {
    #[error("failed to read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to write image {path}: {source}")]
    ImageWrite {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("affine transform is singular")]
    SingularTransform,

    #[error("degenerate point configuration for affine estimation")]
    DegenerateGeometry,

    #[error("image {width}x{height} too small: need at least {min} pixels in each dimension")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("no keypoints detected")]
    NoKeypoints,

    #[error("patch around ({x:.1}, {y:.1}) leaves the image bounds")]
    PatchOutOfBounds { x: f64, y: f64 },

    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    #[error("config error: {0}")]
    Config(String),
}
