//! Multi-modal image matching via phase congruency and maximum index maps.
//!
//! Feature matching between images with severe nonlinear radiation
//! differences (SAR vs. optical, depth vs. optical, day vs. night, ...)
//! defeats intensity- and gradient-based methods. This crate detects
//! keypoints on phase-congruency moment maps, which are nearly invariant to
//! radiometric change, and describes them with histograms over a *maximum
//! index map* (MIM): the per-pixel argmax orientation channel of the
//! scale-summed log-Gabor amplitudes. Rotation invariance comes from
//! matching against all cyclic reorderings of the orientation channels.
//!
//! The pipeline, end to end:
//!
//! 1. [`loggabor`] — frequency-domain log-Gabor filter bank, FFT convolution
//!    into even/odd responses per scale and orientation.
//! 2. [`phasecong`] — per-orientation phase congruency maps with automatic
//!    noise thresholding, then moment analysis yielding a cornerness map
//!    (minimum moment) and an edge map (maximum moment).
//! 3. [`detect`] — corner keypoints from the minimum moment map, edge
//!    keypoints via FAST on the maximum moment map.
//! 4. [`describe`] — MIM construction, dominant orientation, and the
//!    6x6-grid orientation-channel histogram descriptor; one descriptor per
//!    reference keypoint, one per cyclic variant for target keypoints.
//! 5. [`matching`] — nearest-neighbour matching over all variants and
//!    random-sample affine consensus for outlier removal.
//! 6. [`eval`] — ground-truth evaluation (NCM/ME/RMSE/success) and the
//!    rotation sweep harness.
//!
//! All numeric code is generic over the scalar type via [`num::Scalar`];
//! `f32` is the practical default, `f64` is available where tight
//! tolerances matter.

pub mod describe;
pub mod detect;
pub mod error;
pub mod eval;
mod fft;
pub mod imgproc;
pub mod loggabor;
pub mod matching;
pub mod num;
pub mod phasecong;
pub mod pipeline;
pub mod render;
pub mod synthetic;

pub use crate::error::RiftError;
pub use crate::num::Scalar;

/// Single-precision raster, the default pixel container.
pub type RasterF32 = imgproc::Raster<f32>;
/// Double-precision raster for tolerance-critical work.
pub type RasterF64 = imgproc::Raster<f64>;
/// Single-precision affine transform.
pub type AffineF32 = imgproc::AffineTransform<f32>;
/// Double-precision affine transform.
pub type AffineF64 = imgproc::AffineTransform<f64>;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, RiftError>;
