//! Image container, grayscale loading, affine warping and normalization.
//!
//! Rasters are row-major with the origin at the top-left corner, x growing
//! rightward and y downward. Keypoint coordinates and affine parameters use
//! the same convention everywhere in the crate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::num::{cast, cast_usize, Scalar};
use crate::{Result, RiftError};

/// Single-channel floating-point image.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    /// All-zero raster of the given size.
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Raster {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    /// Wraps a row-major buffer. Fails if the length does not match or any
    /// value is non-finite.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(RiftError::DimensionMismatch(format!(
                "buffer of {} values for a {}x{} raster",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RiftError::InvalidParams(
                "raster values must be finite".into(),
            ));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Minimum and maximum pixel value.
    pub fn min_max(&self) -> (T, T) {
        let mut lo = self.data[0];
        let mut hi = self.data[0];
        for &v in &self.data {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    /// Applies `f` to every pixel, yielding a new raster.
    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Self {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Renders to 8-bit gray after min-max normalization.
    pub fn to_gray8(&self) -> image::GrayImage {
        let norm = normalize_minmax(self);
        let bytes: Vec<u8> = norm
            .data
            .iter()
            .map(|&v| (v * cast::<T>(255.0)).round().to_u8().unwrap_or(0))
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer sized from raster dimensions")
    }

    /// Writes the raster as an 8-bit PNG (min-max normalized).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray8()
            .save(path)
            .map_err(|source| RiftError::ImageWrite {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Six-parameter affine map `(x, y) -> (a11 x + a12 y + tx, a21 x + a22 y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform<T> {
    pub a11: T,
    pub a12: T,
    pub a21: T,
    pub a22: T,
    pub tx: T,
    pub ty: T,
}

impl<T: Scalar> AffineTransform<T> {
    pub fn identity() -> Self {
        AffineTransform {
            a11: T::one(),
            a12: T::zero(),
            a21: T::zero(),
            a22: T::one(),
            tx: T::zero(),
            ty: T::zero(),
        }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        AffineTransform {
            a11: T::one(),
            a12: T::zero(),
            a21: T::zero(),
            a22: T::one(),
            tx,
            ty,
        }
    }

    /// Rotation by `angle` radians about `(cx, cy)`, positive from +x toward
    /// +y (clockwise on screen given the y-down convention).
    pub fn rotation_about(cx: T, cy: T, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        AffineTransform {
            a11: c,
            a12: -s,
            a21: s,
            a22: c,
            tx: cx - c * cx + s * cy,
            ty: cy - s * cx - c * cy,
        }
    }

    #[inline]
    pub fn apply(&self, x: T, y: T) -> (T, T) {
        (
            self.a11 * x + self.a12 * y + self.tx,
            self.a21 * x + self.a22 * y + self.ty,
        )
    }

    pub fn determinant(&self) -> T {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Inverse transform; fails when the linear part is singular.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() < cast(1e-12) {
            return Err(RiftError::SingularTransform);
        }
        let inv_det = T::one() / det;
        let b11 = self.a22 * inv_det;
        let b12 = -self.a12 * inv_det;
        let b21 = -self.a21 * inv_det;
        let b22 = self.a11 * inv_det;
        Ok(AffineTransform {
            a11: b11,
            a12: b12,
            a21: b21,
            a22: b22,
            tx: -(b11 * self.tx + b12 * self.ty),
            ty: -(b21 * self.tx + b22 * self.ty),
        })
    }

    /// `self` applied after `other`.
    pub fn compose(&self, other: &Self) -> Self {
        AffineTransform {
            a11: self.a11 * other.a11 + self.a12 * other.a21,
            a12: self.a11 * other.a12 + self.a12 * other.a22,
            a21: self.a21 * other.a11 + self.a22 * other.a21,
            a22: self.a21 * other.a12 + self.a22 * other.a22,
            tx: self.a11 * other.tx + self.a12 * other.ty + self.tx,
            ty: self.a21 * other.tx + self.a22 * other.ty + self.ty,
        }
    }

    /// Coefficients in `[a11, a12, a21, a22, tx, ty]` order.
    pub fn coefficients(&self) -> [T; 6] {
        [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty]
    }

    pub fn from_coefficients(c: [T; 6]) -> Self {
        AffineTransform {
            a11: c[0],
            a12: c[1],
            a21: c[2],
            a22: c[3],
            tx: c[4],
            ty: c[5],
        }
    }
}

/// Loads an image and converts it to a grayscale raster in `[0, 1]`.
///
/// Multi-channel inputs are reduced with the 0.299/0.587/0.114 luma weights.
pub fn load_grayscale<T: Scalar>(path: &Path) -> Result<Raster<T>> {
    let img = image::open(path).map_err(|source| RiftError::ImageRead {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    for p in rgb.pixels() {
        let luma = 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64;
        data.push(cast::<T>(luma.clamp(0.0, 1.0)));
    }
    Raster::from_vec(w, h, data)
}

/// Samples `img` at real coordinates with bilinear weights; samples outside
/// the image contribute zero.
#[inline]
fn bilinear_zero<T: Scalar>(img: &Raster<T>, x: T, y: T) -> T {
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let x0 = x0f.to_isize().unwrap_or(isize::MIN);
    let y0 = y0f.to_isize().unwrap_or(isize::MIN);
    let w = img.width() as isize;
    let h = img.height() as isize;

    let mut acc = T::zero();
    let mut tap = |xi: isize, yi: isize, wgt: T| {
        if xi >= 0 && xi < w && yi >= 0 && yi < h {
            acc = acc + wgt * img.get(xi as usize, yi as usize);
        }
    };
    let one = T::one();
    tap(x0, y0, (one - fx) * (one - fy));
    tap(x0 + 1, y0, fx * (one - fy));
    tap(x0, y0 + 1, (one - fx) * fy);
    tap(x0 + 1, y0 + 1, fx * fy);
    acc
}

/// Warps `img` by `t` into an `out_size` raster using inverse mapping and
/// bilinear interpolation; out-of-bounds samples are zero.
///
/// `t` maps input coordinates to output coordinates.
pub fn warp_affine<T: Scalar>(
    img: &Raster<T>,
    t: &AffineTransform<T>,
    out_size: (usize, usize),
) -> Result<Raster<T>> {
    let inv = t.inverse()?;
    let (ow, oh) = out_size;
    let mut out = Raster::zeros(ow, oh);
    for y in 0..oh {
        let yf = cast_usize::<T>(y);
        for x in 0..ow {
            let (sx, sy) = inv.apply(cast_usize::<T>(x), yf);
            out.set(x, y, bilinear_zero(img, sx, sy));
        }
    }
    Ok(out)
}

/// Rescales to `[0, 1]`; a constant raster maps to all zeros.
pub fn normalize_minmax<T: Scalar>(img: &Raster<T>) -> Raster<T> {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    if range <= T::zero() {
        return Raster::zeros(img.width(), img.height());
    }
    img.map(|v| (v - lo) / range)
}
