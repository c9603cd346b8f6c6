//! Frequency-domain 2D log-Gabor filter bank and FFT convolution.
//!
//! Each filter is the product of a radial term, Gaussian in log-frequency
//! and exactly zero at DC, and an angular term, Gaussian in the wrapped
//! angular distance to the channel orientation. Convolving an image with
//! the complex spatial counterpart of such a one-sided filter yields a
//! quadrature pair: the real part is the even-symmetric response, the
//! imaginary part the odd-symmetric response.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fft;
use crate::imgproc::Raster;
use crate::num::{cast, cast_usize, Scalar};
use crate::{Result, RiftError};

/// Butterworth lowpass cutoff (cycles/pixel) suppressing ringing at the
/// frequency boundary.
const LOWPASS_CUTOFF: f64 = 0.45;
/// Butterworth lowpass order.
const LOWPASS_ORDER: i32 = 15;

/// Geometry of the filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct FilterBankParams<T> {
    /// Number of scales (>= 2).
    pub n_scales: usize,
    /// Number of orientation channels (>= 3), evenly spaced over `[0, pi)`.
    pub n_orientations: usize,
    /// Wavelength of the finest-scale filter, in pixels (> 2).
    pub min_wavelength: T,
    /// Wavelength multiplier between consecutive scales (> 1).
    pub scale_mult: T,
    /// Ratio sigma/f of the radial log-Gaussian, in (0, 1).
    pub sigma_on_f: T,
    /// Angular sigma as a multiple of the channel spacing `pi / n_orientations`.
    pub angular_sigma_ratio: T,
}

impl<T: Scalar> Default for FilterBankParams<T> {
    fn default() -> Self {
        FilterBankParams {
            n_scales: 4,
            n_orientations: 6,
            min_wavelength: cast(3.0),
            scale_mult: cast(2.1),
            sigma_on_f: cast(0.55),
            angular_sigma_ratio: cast(1.2),
        }
    }
}

impl<T: Scalar> FilterBankParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_scales < 2 {
            return Err(RiftError::InvalidParams("n_scales must be >= 2".into()));
        }
        if self.n_orientations < 3 {
            return Err(RiftError::InvalidParams(
                "n_orientations must be >= 3".into(),
            ));
        }
        if self.min_wavelength <= cast(2.0) {
            return Err(RiftError::InvalidParams(
                "min_wavelength must be > 2 pixels".into(),
            ));
        }
        if self.scale_mult <= T::one() {
            return Err(RiftError::InvalidParams("scale_mult must be > 1".into()));
        }
        if self.sigma_on_f <= T::zero() || self.sigma_on_f >= T::one() {
            return Err(RiftError::InvalidParams(
                "sigma_on_f must lie in (0, 1)".into(),
            ));
        }
        if self.angular_sigma_ratio <= T::zero() {
            return Err(RiftError::InvalidParams(
                "angular_sigma_ratio must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Center frequency of scale `s` (0-based), in cycles/pixel.
    pub fn center_frequency(&self, s: usize) -> T {
        T::one() / (self.min_wavelength * self.scale_mult.powi(s as i32))
    }

    /// Orientation angle of channel `o` (0-based), in radians.
    pub fn orientation_angle(&self, o: usize) -> T {
        cast_usize::<T>(o) * T::PI() / cast_usize::<T>(self.n_orientations)
    }
}

/// Frequency-domain filter components for one image size.
///
/// `radial` holds the pure log-Gaussian radial terms (DC forced to zero);
/// the Butterworth `lowpass` is kept separate and applied together with the
/// radial and angular terms during convolution.
#[derive(Debug, Clone)]
pub struct FilterBank<T> {
    pub width: usize,
    pub height: usize,
    pub radial: Vec<Raster<T>>,
    pub angular: Vec<Raster<T>>,
    pub lowpass: Raster<T>,
    pub params: FilterBankParams<T>,
}

/// Even/odd log-Gabor responses with derived amplitudes.
///
/// Channels are indexed by scale-major order: channel `(s, o)` lives at
/// `s * n_orientations + o`.
#[derive(Debug, Clone)]
pub struct ConvolutionSequence<T> {
    pub even: Vec<Raster<T>>,
    pub odd: Vec<Raster<T>>,
    pub amplitude: Vec<Raster<T>>,
    /// Per-orientation amplitude summed over scales.
    pub summed_amplitude: Vec<Raster<T>>,
    pub params: FilterBankParams<T>,
    pub width: usize,
    pub height: usize,
}

impl<T: Scalar> ConvolutionSequence<T> {
    #[inline]
    fn idx(&self, s: usize, o: usize) -> usize {
        s * self.params.n_orientations + o
    }

    pub fn even_at(&self, s: usize, o: usize) -> &Raster<T> {
        &self.even[self.idx(s, o)]
    }

    pub fn odd_at(&self, s: usize, o: usize) -> &Raster<T> {
        &self.odd[self.idx(s, o)]
    }

    pub fn amplitude_at(&self, s: usize, o: usize) -> &Raster<T> {
        &self.amplitude[self.idx(s, o)]
    }
}

/// Normalized frequency of FFT bin `i` out of `n` (DC at 0, negative
/// frequencies in the upper half).
#[inline]
fn bin_frequency<T: Scalar>(i: usize, n: usize) -> T {
    let half = n / 2;
    if i <= half {
        cast_usize::<T>(i) / cast_usize::<T>(n)
    } else {
        -(cast_usize::<T>(n - i) / cast_usize::<T>(n))
    }
}

/// Builds the radial, angular, and lowpass frequency-domain components for
/// a `width` x `height` spectrum.
pub fn build_filter_bank<T: Scalar>(
    width: usize,
    height: usize,
    params: &FilterBankParams<T>,
) -> Result<FilterBank<T>> {
    params.validate()?;
    if width < 16 || height < 16 {
        return Err(RiftError::InvalidParams(format!(
            "filter bank needs at least 16x16 pixels, got {width}x{height}"
        )));
    }

    let n = width * height;
    let mut rho = vec![T::zero(); n];
    let mut sin_theta = vec![T::zero(); n];
    let mut cos_theta = vec![T::zero(); n];
    for y in 0..height {
        let fy: T = bin_frequency(y, height);
        for x in 0..width {
            let fx: T = bin_frequency(x, width);
            let i = y * width + x;
            let r = (fx * fx + fy * fy).sqrt();
            rho[i] = r;
            if r > T::zero() {
                sin_theta[i] = fy / r;
                cos_theta[i] = fx / r;
            } else {
                sin_theta[i] = T::zero();
                cos_theta[i] = T::one();
            }
        }
    }

    let two = cast::<T>(2.0);
    let log_sigma = params.sigma_on_f.ln();
    let radial_denom = two * log_sigma * log_sigma;
    let mut radial = Vec::with_capacity(params.n_scales);
    for s in 0..params.n_scales {
        let f0 = params.center_frequency(s);
        let data: Vec<T> = rho
            .iter()
            .map(|&r| {
                if r <= T::zero() {
                    T::zero()
                } else {
                    let lr = (r / f0).ln();
                    (-(lr * lr) / radial_denom).exp()
                }
            })
            .collect();
        radial.push(Raster::from_vec(width, height, data)?);
    }

    let sigma_theta =
        params.angular_sigma_ratio * T::PI() / cast_usize::<T>(params.n_orientations);
    let angular_denom = two * sigma_theta * sigma_theta;
    let mut angular = Vec::with_capacity(params.n_orientations);
    for o in 0..params.n_orientations {
        let a = params.orientation_angle(o);
        let (sa, ca) = a.sin_cos();
        let data: Vec<T> = (0..n)
            .map(|i| {
                // wrapped angular distance via atan2 of the rotated frame
                let ds = sin_theta[i] * ca - cos_theta[i] * sa;
                let dc = cos_theta[i] * ca + sin_theta[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-(dtheta * dtheta) / angular_denom).exp()
            })
            .collect();
        angular.push(Raster::from_vec(width, height, data)?);
    }

    let cutoff = cast::<T>(LOWPASS_CUTOFF);
    let lowpass_data: Vec<T> = rho
        .iter()
        .map(|&r| T::one() / (T::one() + (r / cutoff).powi(2 * LOWPASS_ORDER)))
        .collect();
    let lowpass = Raster::from_vec(width, height, lowpass_data)?;

    Ok(FilterBank {
        width,
        height,
        radial,
        angular,
        lowpass,
        params: *params,
    })
}

/// Convolves `img` with every (scale, orientation) filter through the FFT,
/// producing even/odd responses, amplitudes, and per-orientation amplitude
/// sums.
pub fn convolve<T: Scalar>(img: &Raster<T>, bank: &FilterBank<T>) -> Result<ConvolutionSequence<T>> {
    let (w, h) = img.dims();
    if w != bank.width || h != bank.height {
        return Err(RiftError::DimensionMismatch(format!(
            "image {w}x{h} vs filter bank {}x{}",
            bank.width, bank.height
        )));
    }
    let params = bank.params;
    let n_s = params.n_scales;
    let n_o = params.n_orientations;

    let spectrum = fft::fft2_forward(w, h, img.as_slice());

    let channels: Vec<(Raster<T>, Raster<T>, Raster<T>)> = (0..n_s * n_o)
        .into_par_iter()
        .map(|c| {
            let (s, o) = (c / n_o, c % n_o);
            let rad = bank.radial[s].as_slice();
            let ang = bank.angular[o].as_slice();
            let lp = bank.lowpass.as_slice();
            let filtered: Vec<Complex<T>> = spectrum
                .iter()
                .zip(rad.iter().zip(ang.iter().zip(lp.iter())))
                .map(|(&v, (&r, (&a, &l)))| v * (r * a * l))
                .collect();
            let responses = fft::fft2_inverse(w, h, filtered);
            let mut even = Vec::with_capacity(w * h);
            let mut odd = Vec::with_capacity(w * h);
            let mut amp = Vec::with_capacity(w * h);
            for v in responses {
                even.push(v.re);
                odd.push(v.im);
                amp.push((v.re * v.re + v.im * v.im).sqrt());
            }
            (
                Raster::from_vec(w, h, even).expect("finite responses"),
                Raster::from_vec(w, h, odd).expect("finite responses"),
                Raster::from_vec(w, h, amp).expect("finite responses"),
            )
        })
        .collect();

    let mut even = Vec::with_capacity(n_s * n_o);
    let mut odd = Vec::with_capacity(n_s * n_o);
    let mut amplitude = Vec::with_capacity(n_s * n_o);
    for (e, o, a) in channels {
        even.push(e);
        odd.push(o);
        amplitude.push(a);
    }

    let mut summed_amplitude = Vec::with_capacity(n_o);
    for o in 0..n_o {
        let mut acc = vec![T::zero(); w * h];
        for s in 0..n_s {
            for (dst, &src) in acc.iter_mut().zip(amplitude[s * n_o + o].as_slice()) {
                *dst = *dst + src;
            }
        }
        summed_amplitude.push(Raster::from_vec(w, h, acc)?);
    }

    Ok(ConvolutionSequence {
        even,
        odd,
        amplitude,
        summed_amplitude,
        params,
        width: w,
        height: h,
    })
}

/// Per-pixel phase `atan2(odd, even)` in `(-pi, pi]`; `atan2(0, 0)` is 0.
pub fn phase<T: Scalar>(even: &Raster<T>, odd: &Raster<T>) -> Result<Raster<T>> {
    if even.dims() != odd.dims() {
        return Err(RiftError::DimensionMismatch(
            "even/odd rasters differ in size".into(),
        ));
    }
    let data: Vec<T> = even
        .as_slice()
        .iter()
        .zip(odd.as_slice())
        .map(|(&e, &o)| o.atan2(e))
        .collect();
    Raster::from_vec(even.width(), even.height(), data)
}
