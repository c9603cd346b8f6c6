//! Per-orientation phase congruency, noise thresholding, and moment maps.
//!
//! Phase congruency measures how consistently the local Fourier components
//! agree in phase across scales. Per orientation the summed energy is
//! compared against an automatically estimated noise floor, weighted by a
//! frequency-spread sigmoid, and normalized by the total amplitude, giving
//! a contrast-invariant significance measure in `[0, 1]`. Moment analysis
//! of the per-orientation maps then yields a cornerness map (the minimum
//! moment) and an edge map (the maximum moment).

use serde::{Deserialize, Serialize};

use crate::imgproc::Raster;
use crate::loggabor::ConvolutionSequence;
use crate::num::{cast, cast_usize, Scalar};
use crate::{Result, RiftError};

/// Phase congruency tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct PcParams<T> {
    /// Noise floor = mean + `noise_k` standard deviations of the estimated
    /// noise energy (>= 0).
    pub noise_k: T,
    /// Small stabilizer added to amplitude denominators (> 0).
    pub epsilon: T,
    /// Midpoint of the frequency-spread weighting sigmoid, in (0, 1).
    pub weight_cutoff: T,
    /// Gain of the frequency-spread weighting sigmoid (> 0).
    pub weight_gain: T,
}

impl<T: Scalar> Default for PcParams<T> {
    fn default() -> Self {
        PcParams {
            noise_k: cast(2.0),
            epsilon: cast(1e-4),
            weight_cutoff: cast(0.5),
            weight_gain: cast(10.0),
        }
    }
}

impl<T: Scalar> PcParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= T::zero() {
            return Err(RiftError::InvalidParams("epsilon must be > 0".into()));
        }
        if self.noise_k < T::zero() {
            return Err(RiftError::InvalidParams("noise_k must be >= 0".into()));
        }
        if self.weight_cutoff <= T::zero() || self.weight_cutoff >= T::one() {
            return Err(RiftError::InvalidParams(
                "weight_cutoff must lie in (0, 1)".into(),
            ));
        }
        if self.weight_gain <= T::zero() {
            return Err(RiftError::InvalidParams("weight_gain must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-orientation and combined phase congruency maps, all in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PcMaps<T> {
    pub per_orientation: Vec<Raster<T>>,
    pub combined: Raster<T>,
    /// Channel angles matching `per_orientation`, in radians.
    pub orientations: Vec<T>,
}

/// Moment analysis products of the per-orientation PC maps.
#[derive(Debug, Clone)]
pub struct MomentMaps<T> {
    /// Principal axis angle per pixel.
    pub psi: Raster<T>,
    /// Minimum moment: the cornerness measure.
    pub min_moment: Raster<T>,
    /// Maximum moment: the edge map.
    pub max_moment: Raster<T>,
    pub a: Raster<T>,
    pub b: Raster<T>,
    pub c: Raster<T>,
}

fn median<T: Scalar>(values: &[T]) -> T {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite pixel values"));
    if n % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / cast(2.0)
    }
}

/// Estimates the per-orientation noise energy threshold.
///
/// The amplitude of the smallest-scale (highest-frequency) filter response
/// is dominated by noise; its median fixes the Rayleigh scale of the noise
/// amplitude distribution, which is extrapolated across scales by the
/// filter bandwidth ratio. The threshold is `mean + noise_k * sigma` of the
/// resulting noise energy estimate.
pub fn estimate_noise_threshold<T: Scalar>(
    seq: &ConvolutionSequence<T>,
    params: &PcParams<T>,
) -> Result<Vec<T>> {
    params.validate()?;
    let n_o = seq.params.n_orientations;
    let n_s = seq.params.n_scales;
    let ratio = T::one() / seq.params.scale_mult;
    // geometric series of per-scale noise amplitude scales
    let series = (T::one() - ratio.powi(n_s as i32)) / (T::one() - ratio);
    let sqrt_ln4 = cast::<T>(4.0).ln().sqrt();
    let mean_factor = (T::PI() / cast(2.0)).sqrt();
    let sigma_factor = ((cast::<T>(4.0) - T::PI()) / cast(2.0)).sqrt();

    let mut thresholds = Vec::with_capacity(n_o);
    for o in 0..n_o {
        let tau = median(seq.amplitude_at(0, o).as_slice()) / sqrt_ln4;
        let total_tau = tau * series;
        let t = total_tau * mean_factor + params.noise_k * total_tau * sigma_factor;
        thresholds.push(t.max(T::zero()));
    }
    Ok(thresholds)
}

/// Computes per-orientation and combined phase congruency maps.
pub fn compute_pc<T: Scalar>(
    seq: &ConvolutionSequence<T>,
    params: &PcParams<T>,
) -> Result<PcMaps<T>> {
    params.validate()?;
    let thresholds = estimate_noise_threshold(seq, params)?;
    let (w, h) = (seq.width, seq.height);
    let n = w * h;
    let n_s = seq.params.n_scales;
    let n_o = seq.params.n_orientations;
    let xi = params.epsilon;
    let n_s_t = cast_usize::<T>(n_s);

    let mut per_orientation = Vec::with_capacity(n_o);
    let mut combined_num = vec![T::zero(); n];
    let mut combined_den = vec![T::zero(); n];

    for o in 0..n_o {
        let sum_amp = seq.summed_amplitude[o].as_slice();
        let t_o = thresholds[o];

        let mut sum_e = vec![T::zero(); n];
        let mut sum_o = vec![T::zero(); n];
        let mut max_amp = vec![T::zero(); n];
        for s in 0..n_s {
            let e = seq.even_at(s, o).as_slice();
            let od = seq.odd_at(s, o).as_slice();
            let a = seq.amplitude_at(s, o).as_slice();
            for i in 0..n {
                sum_e[i] = sum_e[i] + e[i];
                sum_o[i] = sum_o[i] + od[i];
                if a[i] > max_amp[i] {
                    max_amp[i] = a[i];
                }
            }
        }

        // energy via the phase deviation identity: for each scale,
        // A * dPhi = E*mean_e + O*mean_o - |E*mean_o - O*mean_e|
        let mut energy = vec![T::zero(); n];
        let mut mean_e = vec![T::zero(); n];
        let mut mean_o = vec![T::zero(); n];
        for i in 0..n {
            let c = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt();
            if c > T::zero() {
                mean_e[i] = sum_e[i] / c;
                mean_o[i] = sum_o[i] / c;
            }
        }
        for s in 0..n_s {
            let e = seq.even_at(s, o).as_slice();
            let od = seq.odd_at(s, o).as_slice();
            for i in 0..n {
                energy[i] = energy[i] + e[i] * mean_e[i] + od[i] * mean_o[i]
                    - (e[i] * mean_o[i] - od[i] * mean_e[i]).abs();
            }
        }

        let mut pc_o = Vec::with_capacity(n);
        for i in 0..n {
            let spread = sum_amp[i] / (n_s_t * (max_amp[i] + xi));
            let weight = T::one()
                / (T::one() + (params.weight_gain * (params.weight_cutoff - spread)).exp());
            let num = weight * (energy[i] - t_o).max(T::zero());
            pc_o.push(num / (sum_amp[i] + xi));
            combined_num[i] = combined_num[i] + num;
            combined_den[i] = combined_den[i] + sum_amp[i];
        }
        per_orientation.push(Raster::from_vec(w, h, pc_o)?);
    }

    let combined: Vec<T> = combined_num
        .iter()
        .zip(&combined_den)
        .map(|(&num, &den)| num / (den + xi))
        .collect();

    let orientations = (0..n_o).map(|o| seq.params.orientation_angle(o)).collect();

    Ok(PcMaps {
        per_orientation,
        combined: Raster::from_vec(w, h, combined)?,
        orientations,
    })
}

/// Moment analysis of the per-orientation PC maps.
///
/// The `+sqrt` branch is the maximum moment (edge strength), the `-sqrt`
/// branch the minimum moment (cornerness); their sum equals `a + c`.
pub fn compute_moments<T: Scalar>(pc: &PcMaps<T>) -> Result<MomentMaps<T>> {
    let n_o = pc.per_orientation.len();
    if n_o == 0 || n_o != pc.orientations.len() {
        return Err(RiftError::DimensionMismatch(
            "per-orientation maps and angles disagree".into(),
        ));
    }
    let (w, h) = pc.per_orientation[0].dims();
    let n = w * h;
    let half = cast::<T>(0.5);

    let trig: Vec<(T, T)> = pc.orientations.iter().map(|&t| (t.cos(), t.sin())).collect();

    let mut a = vec![T::zero(); n];
    let mut b = vec![T::zero(); n];
    let mut c = vec![T::zero(); n];
    for (o, map) in pc.per_orientation.iter().enumerate() {
        if map.dims() != (w, h) {
            return Err(RiftError::DimensionMismatch(
                "per-orientation maps differ in size".into(),
            ));
        }
        let (cos_t, sin_t) = trig[o];
        for (i, &p) in map.as_slice().iter().enumerate() {
            let x = p * cos_t;
            let y = p * sin_t;
            a[i] = a[i] + x * x;
            b[i] = b[i] + cast::<T>(2.0) * x * y;
            c[i] = c[i] + y * y;
        }
    }

    let mut psi = Vec::with_capacity(n);
    let mut min_m = Vec::with_capacity(n);
    let mut max_m = Vec::with_capacity(n);
    for i in 0..n {
        let diff = a[i] - c[i];
        let root = (b[i] * b[i] + diff * diff).sqrt();
        psi.push(half * b[i].atan2(diff));
        max_m.push(half * (c[i] + a[i] + root));
        min_m.push((half * (c[i] + a[i] - root)).max(T::zero()));
    }

    Ok(MomentMaps {
        psi: Raster::from_vec(w, h, psi)?,
        min_moment: Raster::from_vec(w, h, min_m)?,
        max_moment: Raster::from_vec(w, h, max_m)?,
        a: Raster::from_vec(w, h, a)?,
        b: Raster::from_vec(w, h, b)?,
        c: Raster::from_vec(w, h, c)?,
    })
}
