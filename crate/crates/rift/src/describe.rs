//! Maximum index map construction and feature description.
//!
//! The maximum index map (MIM) stores, per pixel, the 1-based orientation
//! channel whose scale-summed log-Gabor amplitude is largest. Index values
//! are categorical and nearly invariant to radiometric change, which makes
//! histograms over them a robust replacement for gradient histograms.
//!
//! Rotating an image cyclically permutes which channel responds strongest,
//! so the orientation channels form a ring: `build_mim` can start the ring
//! at any channel, and a target image is described once per cyclic variant.
//! Matching picks the variant that undoes the channel permutation, while
//! the per-keypoint dominant orientation undoes the geometric rotation.
//!
//! Channel angles are periodic in pi, so dominant-orientation votes use
//! doubled angles; the remaining pi ambiguity is resolved with the
//! amplitude centroid direction, which rotates with the image content over
//! the full circle.

use serde::{Deserialize, Serialize};

use crate::detect::Keypoint;
use crate::imgproc::Raster;
use crate::loggabor::ConvolutionSequence;
use crate::num::{cast, cast_usize, Scalar};
use crate::{Result, RiftError};

/// Sub-grid partition of the descriptor patch per axis.
pub const DESCRIPTOR_GRID: usize = 6;
/// Histogram bins of the dominant-orientation vote, over doubled angles.
const ORIENTATION_BINS: usize = 36;
/// Peak-to-mean vote ratio below which the orientation is low-confidence.
const ORIENTATION_CONFIDENCE_RATIO: f64 = 1.5;

/// Per-pixel argmax orientation channel with its amplitude.
#[derive(Debug, Clone)]
pub struct MaxIndexMap<T> {
    width: usize,
    height: usize,
    n_orientations: usize,
    /// Which cyclic reordering of the channels produced this map.
    shift: usize,
    /// 1-based winning channel per pixel, in `1..=n_orientations`.
    index: Vec<u8>,
    /// Amplitude of the winning channel per pixel.
    a_max: Raster<T>,
}

impl<T: Scalar> MaxIndexMap<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_orientations(&self) -> usize {
        self.n_orientations
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    #[inline]
    pub fn index_at(&self, x: usize, y: usize) -> u8 {
        self.index[y * self.width + x]
    }

    pub fn indices(&self) -> &[u8] {
        &self.index
    }

    pub fn a_max(&self) -> &Raster<T> {
        &self.a_max
    }

    /// Renders the categorical index map with one color per channel.
    pub fn to_palette_image(&self) -> image::RgbImage {
        const PALETTE: [[u8; 3]; 8] = [
            [230, 57, 70],
            [244, 162, 97],
            [233, 196, 106],
            [42, 157, 143],
            [38, 70, 83],
            [108, 117, 225],
            [181, 101, 167],
            [120, 190, 60],
        ];
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let idx = self.index_at(x as usize, y as usize) as usize - 1;
            image::Rgb(PALETTE[idx % PALETTE.len()])
        })
    }
}

/// Builds the maximum index map for one cyclic variant.
///
/// The channel ring is reordered so that position 1 holds original channel
/// `shift + 1`; the stored index is the 1-based argmax position in the
/// reordered ring. Ties go to the smallest original channel, which makes
/// variant `k` exactly the relabeling `((i - k - 1) mod N) + 1` of variant
/// zero.
pub fn build_mim<T: Scalar>(seq: &ConvolutionSequence<T>, shift: usize) -> Result<MaxIndexMap<T>> {
    let n_o = seq.params.n_orientations;
    if shift >= n_o {
        return Err(RiftError::InvalidParams(format!(
            "shift {shift} out of range for {n_o} orientations"
        )));
    }
    let (w, h) = (seq.width, seq.height);
    let layers: Vec<&[T]> = seq.summed_amplitude.iter().map(|r| r.as_slice()).collect();

    let mut index = vec![0u8; w * h];
    let mut a_max = vec![T::zero(); w * h];
    for i in 0..w * h {
        let mut best_pos = 0usize;
        let mut best_channel = shift;
        let mut best_val = layers[shift][i];
        for pos in 1..n_o {
            let channel = (pos + shift) % n_o;
            let v = layers[channel][i];
            if v > best_val || (v == best_val && channel < best_channel) {
                best_val = v;
                best_pos = pos;
                best_channel = channel;
            }
        }
        index[i] = (best_pos + 1) as u8;
        a_max[i] = best_val;
    }

    Ok(MaxIndexMap {
        width: w,
        height: h,
        n_orientations: n_o,
        shift,
        index,
        a_max: Raster::from_vec(w, h, a_max)?,
    })
}

/// Result of the dominant-orientation vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantOrientation<T> {
    /// De-rotation angle in `[0, 2*pi)`; zero when not confident.
    pub angle: T,
    /// False when the vote histogram has no clear peak (or no signal).
    pub confident: bool,
}

/// Estimates the keypoint's dominant orientation from the index map.
///
/// Votes are the doubled channel angles `2 (index-1) pi / N`, weighted by
/// the channel amplitude and a Gaussian of `sigma = radius / 2`. The peak
/// bin is refined parabolically, halved back to a structural angle, and
/// the amplitude centroid direction picks between the two pi-opposed
/// candidates.
pub fn dominant_orientation<T: Scalar>(
    mim: &MaxIndexMap<T>,
    kp: &Keypoint<T>,
    radius: usize,
) -> Result<DominantOrientation<T>> {
    let cx = kp.x.to_isize().ok_or_else(|| RiftError::PatchOutOfBounds {
        x: kp.x.to_f64().unwrap_or(f64::NAN),
        y: kp.y.to_f64().unwrap_or(f64::NAN),
    })?;
    let cy = kp.y.to_isize().unwrap_or(0);
    let r = radius as isize;
    if cx - r < 0
        || cy - r < 0
        || cx + r >= mim.width as isize
        || cy + r >= mim.height as isize
    {
        return Err(RiftError::PatchOutOfBounds {
            x: kp.x.to_f64().unwrap_or(f64::NAN),
            y: kp.y.to_f64().unwrap_or(f64::NAN),
        });
    }

    let n_o = mim.n_orientations;
    let two_pi = T::PI() + T::PI();
    let bin_width = two_pi / cast_usize::<T>(ORIENTATION_BINS);
    let sigma = cast_usize::<T>(radius) / cast(2.0);
    let gauss_denom = cast::<T>(2.0) * sigma * sigma;
    let r2 = (radius * radius) as isize;

    let mut hist = [T::zero(); ORIENTATION_BINS];
    let mut centroid_x = T::zero();
    let mut centroid_y = T::zero();
    let mut total = T::zero();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let x = (cx + dx) as usize;
            let y = (cy + dy) as usize;
            let amp = mim.a_max.get(x, y);
            if amp <= T::zero() {
                continue;
            }
            let dxf = cast::<T>(dx as f64);
            let dyf = cast::<T>(dy as f64);
            let w = amp * (-(dxf * dxf + dyf * dyf) / gauss_denom).exp();
            let channel = (mim.index_at(x, y) - 1) as usize;
            let doubled = cast::<T>(2.0) * cast_usize::<T>(channel) * T::PI() / cast_usize::<T>(n_o);
            let bin = (doubled / bin_width)
                .round()
                .to_usize()
                .unwrap_or(0)
                % ORIENTATION_BINS;
            hist[bin] = hist[bin] + w;
            centroid_x = centroid_x + w * dxf;
            centroid_y = centroid_y + w * dyf;
            total = total + w;
        }
    }

    if total <= T::zero() {
        return Ok(DominantOrientation {
            angle: T::zero(),
            confident: false,
        });
    }

    let mut peak = 0usize;
    for b in 1..ORIENTATION_BINS {
        if hist[b] > hist[peak] {
            peak = b;
        }
    }
    // mean over the N channel bins that can receive votes
    let channel_mean = total / cast_usize::<T>(n_o);
    if hist[peak] < cast::<T>(ORIENTATION_CONFIDENCE_RATIO) * channel_mean {
        return Ok(DominantOrientation {
            angle: T::zero(),
            confident: false,
        });
    }

    let left = hist[(peak + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
    let right = hist[(peak + 1) % ORIENTATION_BINS];
    let denom = left - cast::<T>(2.0) * hist[peak] + right;
    let offset = if denom.abs() > T::zero() {
        (cast::<T>(0.5) * (left - right)) / denom
    } else {
        T::zero()
    };
    let mut doubled = (cast_usize::<T>(peak) + offset) * bin_width;
    doubled = doubled - two_pi * (doubled / two_pi).floor();

    let half = doubled / cast(2.0);
    let (s, c) = half.sin_cos();
    let angle = if centroid_x * c + centroid_y * s < T::zero() {
        half + T::PI()
    } else {
        half
    };

    Ok(DominantOrientation {
        angle,
        confident: true,
    })
}

/// A normalized grid histogram over MIM values around one keypoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Descriptor<T> {
    /// Concatenated sub-grid histograms, `6 * 6 * n_orientations` long.
    pub vector: Vec<T>,
    pub keypoint: Keypoint<T>,
    /// MIM variant this descriptor was built from.
    pub shift: usize,
    /// True when the patch carried no signal; excluded from matching.
    pub degenerate: bool,
}

/// Builds one descriptor per index map in `mim_set` for the keypoint.
///
/// The `patch x patch` sampling grid is rotated by the keypoint's dominant
/// orientation and sampled nearest-neighbour (indices are categorical).
/// Each sample adds its Gaussian window weight (`sigma = patch / 2`) to the
/// bin of its index value in its 6x6 sub-grid histogram; the concatenated
/// vector is normalized to unit length.
pub fn describe<T: Scalar>(
    mim_set: &[MaxIndexMap<T>],
    kp: &Keypoint<T>,
    patch: usize,
) -> Result<Vec<Descriptor<T>>> {
    if mim_set.is_empty() {
        return Err(RiftError::InvalidParams("empty MIM set".into()));
    }
    if patch < DESCRIPTOR_GRID || patch % DESCRIPTOR_GRID != 0 {
        return Err(RiftError::InvalidParams(format!(
            "patch size {patch} must be a positive multiple of {DESCRIPTOR_GRID}"
        )));
    }
    let n_o = mim_set[0].n_orientations;
    let (w, h) = (mim_set[0].width, mim_set[0].height);

    // Gaussian window over unrotated patch offsets, shared by all variants
    let sigma = cast_usize::<T>(patch) / cast(2.0);
    let gauss_denom = cast::<T>(2.0) * sigma * sigma;
    let center = (cast_usize::<T>(patch) - T::one()) / cast(2.0);
    let offsets: Vec<T> = (0..patch).map(|u| cast_usize::<T>(u) - center).collect();
    let weights: Vec<T> = (0..patch * patch)
        .map(|i| {
            let du = offsets[i % patch];
            let dv = offsets[i / patch];
            (-(du * du + dv * dv) / gauss_denom).exp()
        })
        .collect();

    let (sin_a, cos_a) = kp.orientation.sin_cos();
    let dim = DESCRIPTOR_GRID * DESCRIPTOR_GRID * n_o;

    let mut out = Vec::with_capacity(mim_set.len());
    for mim in mim_set {
        debug_assert_eq!((mim.width, mim.height), (w, h));
        let mut vector = vec![T::zero(); dim];
        let mut signal = false;
        for v in 0..patch {
            let dv = offsets[v];
            let grid_row = v * DESCRIPTOR_GRID / patch;
            for u in 0..patch {
                let du = offsets[u];
                let sx = kp.x + du * cos_a - dv * sin_a;
                let sy = kp.y + du * sin_a + dv * cos_a;
                let xi = sx.round().to_isize().unwrap_or(-1);
                let yi = sy.round().to_isize().unwrap_or(-1);
                if xi < 0 || yi < 0 || xi >= w as isize || yi >= h as isize {
                    return Err(RiftError::PatchOutOfBounds {
                        x: kp.x.to_f64().unwrap_or(f64::NAN),
                        y: kp.y.to_f64().unwrap_or(f64::NAN),
                    });
                }
                let (xi, yi) = (xi as usize, yi as usize);
                if mim.a_max.get(xi, yi) > T::zero() {
                    signal = true;
                }
                let bin = (mim.index_at(xi, yi) - 1) as usize;
                let grid_col = u * DESCRIPTOR_GRID / patch;
                let slot = (grid_row * DESCRIPTOR_GRID + grid_col) * n_o + bin;
                vector[slot] = vector[slot] + weights[v * patch + u];
            }
        }

        if !signal {
            out.push(Descriptor {
                vector: vec![T::zero(); dim],
                keypoint: *kp,
                shift: mim.shift,
                degenerate: true,
            });
            continue;
        }

        let norm = vector
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt();
        for v in &mut vector {
            *v = *v / norm;
        }
        out.push(Descriptor {
            vector,
            keypoint: *kp,
            shift: mim.shift,
            degenerate: false,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::KeypointKind;
    use crate::loggabor::FilterBankParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fabricates a convolution sequence whose per-orientation summed
    /// amplitudes equal the given layers.
    fn seq_from_layers(layers: Vec<Raster<f64>>) -> ConvolutionSequence<f64> {
        let n_o = layers.len();
        let (w, h) = layers[0].dims();
        let params = FilterBankParams {
            n_scales: 2,
            n_orientations: n_o,
            ..FilterBankParams::default()
        };
        let halves: Vec<Raster<f64>> = layers.iter().map(|l| l.map(|v| v / 2.0)).collect();
        let mut amplitude = Vec::new();
        for _s in 0..2 {
            amplitude.extend(halves.iter().cloned());
        }
        ConvolutionSequence {
            even: amplitude.clone(),
            odd: vec![Raster::zeros(w, h); 2 * n_o],
            amplitude,
            summed_amplitude: layers,
            params,
            width: w,
            height: h,
        }
    }

    fn constant_layers(n_o: usize, dominant: usize, w: usize, h: usize) -> Vec<Raster<f64>> {
        (0..n_o)
            .map(|o| {
                let v = if o == dominant { 2.0 } else { 1.0 / (o + 1) as f64 };
                Raster::from_vec(w, h, vec![v; w * h]).unwrap()
            })
            .collect()
    }

    fn kp_at(x: f64, y: f64, orientation: f64) -> Keypoint<f64> {
        Keypoint {
            x,
            y,
            kind: KeypointKind::Corner,
            strength: 1.0,
            orientation,
        }
    }

    #[test]
    fn uniform_dominant_channel_maps_to_its_ring_position() {
        // original channel 3 (1-based) dominates everywhere
        let seq = seq_from_layers(constant_layers(6, 2, 8, 8));
        let m0 = build_mim(&seq, 0).unwrap();
        assert!(m0.indices().iter().all(|&i| i == 3));
        let m2 = build_mim(&seq, 2).unwrap();
        assert!(m2.indices().iter().all(|&i| i == 1));
        assert_eq!(m2.shift(), 2);
    }

    #[test]
    fn a_max_is_the_winning_amplitude() {
        let seq = seq_from_layers(constant_layers(6, 2, 8, 8));
        for shift in 0..6 {
            let m = build_mim(&seq, shift).unwrap();
            assert!(m.a_max().as_slice().iter().all(|&v| v == 2.0));
        }
    }

    #[test]
    fn ties_resolve_to_smallest_original_channel() {
        let mut layers = constant_layers(6, 0, 4, 4);
        layers[3] = layers[0].clone(); // channels 1 and 4 tie
        let seq = seq_from_layers(layers);
        for shift in 0..6 {
            let m = build_mim(&seq, shift).unwrap();
            // original channel 0 wins; its ring position is (0 - shift) mod 6
            let expect = ((6 - shift) % 6 + 1) as u8;
            assert!(
                m.indices().iter().all(|&i| i == expect),
                "shift {shift}: got {:?}, want {expect}",
                m.indices()[0]
            );
        }
    }

    #[test]
    fn variants_are_exact_relabelings_of_variant_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let layers: Vec<Raster<f64>> = (0..6)
            .map(|_| {
                let data: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
                Raster::from_vec(8, 8, data).unwrap()
            })
            .collect();
        let seq = seq_from_layers(layers);
        let base = build_mim(&seq, 0).unwrap();
        for k in 0..6 {
            let variant = build_mim(&seq, k).unwrap();
            for (i, (&got, &b)) in variant.indices().iter().zip(base.indices()).enumerate() {
                let expect = ((b as usize + 6 - k - 1) % 6 + 1) as u8;
                assert_eq!(got, expect, "pixel {i}, variant {k}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_shift() {
        let seq = seq_from_layers(constant_layers(6, 0, 8, 8));
        assert!(build_mim(&seq, 6).is_err());
    }

    fn uniform_mim(index: u8, n_o: usize, w: usize, h: usize, amp: f64) -> MaxIndexMap<f64> {
        MaxIndexMap {
            width: w,
            height: h,
            n_orientations: n_o,
            shift: 0,
            index: vec![index; w * h],
            a_max: Raster::from_vec(w, h, vec![amp; w * h]).unwrap(),
        }
    }

    #[test]
    fn uniform_index_one_gives_zero_orientation() {
        let mim = uniform_mim(1, 6, 64, 64, 1.0);
        let d = dominant_orientation(&mim, &kp_at(32.0, 32.0, 0.0), 16).unwrap();
        assert!(d.confident);
        assert!(d.angle.abs() < 2.0 * std::f64::consts::PI / 36.0);
    }

    #[test]
    fn uniform_index_four_gives_half_pi() {
        let mim = uniform_mim(4, 6, 64, 64, 1.0);
        let d = dominant_orientation(&mim, &kp_at(32.0, 32.0, 0.0), 16).unwrap();
        assert!(d.confident);
        // doubled-angle peak at pi; the centroid flip only adds pi to the
        // halved angle, which doubles back to the same residue mod 2*pi
        let doubled = (2.0 * d.angle) % (2.0 * std::f64::consts::PI);
        assert!(
            (doubled - std::f64::consts::PI).abs() < 2.0 * std::f64::consts::PI / 36.0,
            "doubled angle {doubled}"
        );
    }

    #[test]
    fn amplitude_centroid_resolves_the_pi_ambiguity() {
        let w = 64;
        let mut bright_right = uniform_mim(1, 6, w, w, 0.0);
        let mut bright_left = uniform_mim(1, 6, w, w, 0.0);
        for y in 0..w {
            for x in 0..w {
                if x >= 32 {
                    bright_right.a_max.set(x, y, 1.0);
                } else {
                    bright_left.a_max.set(x, y, 1.0);
                }
            }
        }
        let kp = kp_at(32.0, 32.0, 0.0);
        let right = dominant_orientation(&bright_right, &kp, 16).unwrap();
        let left = dominant_orientation(&bright_left, &kp, 16).unwrap();
        assert!(right.confident && left.confident);
        assert!(right.angle.abs() < 1e-9, "right-heavy: {}", right.angle);
        assert!(
            (left.angle - std::f64::consts::PI).abs() < 1e-9,
            "left-heavy: {}",
            left.angle
        );
    }

    #[test]
    fn random_indices_are_flagged_low_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mim = uniform_mim(1, 6, 64, 64, 1.0);
        for i in 0..mim.index.len() {
            mim.index[i] = rng.gen_range(1..=6);
        }
        let d = dominant_orientation(&mim, &kp_at(32.0, 32.0, 0.0), 16).unwrap();
        assert!(!d.confident);
        assert_eq!(d.angle, 0.0);
    }

    #[test]
    fn zero_amplitude_disk_is_degenerate() {
        let mim = uniform_mim(2, 6, 64, 64, 0.0);
        let d = dominant_orientation(&mim, &kp_at(32.0, 32.0, 0.0), 16).unwrap();
        assert!(!d.confident);
        assert_eq!(d.angle, 0.0);
    }

    #[test]
    fn orientation_requires_disk_inside_image() {
        let mim = uniform_mim(1, 6, 64, 64, 1.0);
        assert!(dominant_orientation(&mim, &kp_at(5.0, 32.0, 0.0), 16).is_err());
    }

    #[test]
    fn descriptor_has_grid_times_channels_dimension_and_unit_norm() {
        let mim = uniform_mim(2, 6, 128, 128, 1.0);
        let descs = describe(&[mim], &kp_at(64.0, 64.0, 0.0), 96).unwrap();
        assert_eq!(descs.len(), 1);
        let d = &descs[0];
        assert_eq!(d.vector.len(), 216);
        assert!(!d.degenerate);
        let norm: f64 = d.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_index_concentrates_mass_in_one_bin_per_subgrid() {
        let mim = uniform_mim(2, 6, 128, 128, 1.0);
        let descs = describe(&[mim], &kp_at(64.0, 64.0, 0.0), 96).unwrap();
        let d = &descs[0];
        let nonzero: Vec<usize> = (0..216).filter(|&i| d.vector[i] > 0.0).collect();
        assert_eq!(nonzero.len(), 36);
        for i in nonzero {
            assert_eq!(i % 6, 1, "mass outside bin 2 at slot {i}");
        }
    }

    #[test]
    fn flat_patch_is_flagged_degenerate() {
        let mim = uniform_mim(3, 6, 128, 128, 0.0);
        let descs = describe(&[mim], &kp_at(64.0, 64.0, 0.0), 96).unwrap();
        assert!(descs[0].degenerate);
        assert!(descs[0].vector.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn patch_leaving_image_is_an_error() {
        let mim = uniform_mim(1, 6, 128, 128, 1.0);
        assert!(matches!(
            describe(&[mim], &kp_at(30.0, 64.0, 0.0), 96),
            Err(RiftError::PatchOutOfBounds { .. })
        ));
    }

    #[test]
    fn descriptor_records_variant_shifts() {
        let seq = seq_from_layers(constant_layers(6, 1, 256, 256));
        let mims: Vec<_> = (0..6).map(|k| build_mim(&seq, k).unwrap()).collect();
        let descs = describe(&mims, &kp_at(128.0, 128.0, 0.0), 96).unwrap();
        assert_eq!(descs.len(), 6);
        for (k, d) in descs.iter().enumerate() {
            assert_eq!(d.shift, k);
        }
    }

    proptest! {
        #[test]
        fn relabel_identity_holds_for_random_layers(seed in 0u64..256) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers: Vec<Raster<f64>> = (0..4)
                .map(|_| {
                    let data: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
                    Raster::from_vec(4, 4, data).unwrap()
                })
                .collect();
            let seq = {
                let mut s = seq_from_layers(layers);
                s.params.n_orientations = 4;
                s
            };
            let base = build_mim(&seq, 0).unwrap();
            for k in 1..4 {
                let variant = build_mim(&seq, k).unwrap();
                for (&got, &b) in variant.indices().iter().zip(base.indices()) {
                    prop_assert_eq!(got, ((b as usize + 4 - k - 1) % 4 + 1) as u8);
                }
            }
        }
    }
}
