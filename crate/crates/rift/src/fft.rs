//! Minimal 2D FFT helpers on top of `rustfft`.
//!
//! Spectra use the standard unshifted layout: DC at linear index 0,
//! frequencies along each axis running 0, 1/n, ..., then negative. Forward
//! transforms are unnormalized; the inverse divides by `width * height`.

use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::num::Scalar;

fn transpose<T: Copy>(width: usize, height: usize, data: &[T], out: &mut Vec<T>) {
    out.clear();
    out.reserve(data.len());
    for x in 0..width {
        for y in 0..height {
            out.push(data[y * width + x]);
        }
    }
}

fn fft2_inplace<T: Scalar>(
    width: usize,
    height: usize,
    buf: &mut Vec<Complex<T>>,
    direction: FftDirection,
) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(width, direction);
    let col_fft = planner.plan_fft(height, direction);

    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut scratch = Vec::new();
    transpose(width, height, buf, &mut scratch);
    for col in scratch.chunks_exact_mut(height) {
        col_fft.process(col);
    }
    transpose(height, width, &scratch, buf);
}

/// Forward 2D FFT of a real buffer.
pub(crate) fn fft2_forward<T: Scalar>(
    width: usize,
    height: usize,
    real: &[T],
) -> Vec<Complex<T>> {
    debug_assert_eq!(real.len(), width * height);
    let mut buf: Vec<Complex<T>> = real.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2_inplace(width, height, &mut buf, FftDirection::Forward);
    buf
}

/// Inverse 2D FFT, normalized by `1 / (width * height)`.
pub(crate) fn fft2_inverse<T: Scalar>(
    width: usize,
    height: usize,
    mut spectrum: Vec<Complex<T>>,
) -> Vec<Complex<T>> {
    debug_assert_eq!(spectrum.len(), width * height);
    fft2_inplace(width, height, &mut spectrum, FftDirection::Inverse);
    let scale = T::one() / crate::num::cast_usize::<T>(width * height);
    for v in &mut spectrum {
        *v = *v * scale;
    }
    spectrum
}
