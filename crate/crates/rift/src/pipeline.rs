//! End-to-end matching pipeline and its configuration.
//!
//! `match_pair` runs the full flow for one reference/target image pair:
//! filter bank, convolution, phase congruency, moment maps, corner and
//! edge detection, MIM construction, description, nearest-neighbour
//! matching, and affine consensus. The reference image is described once
//! (shift-0 MIM), the target once per cyclic variant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::describe::{build_mim, describe, dominant_orientation, Descriptor, MaxIndexMap};
use crate::detect::{detect_corners, detect_edges, merge_keypoints, DetectParams, Keypoint};
use crate::imgproc::Raster;
use crate::loggabor::{build_filter_bank, convolve, FilterBankParams};
use crate::matching::{match_nn, remove_outliers, MatchResult};
use crate::num::{cast, Scalar};
use crate::phasecong::{compute_moments, compute_pc, MomentMaps, PcMaps, PcParams};
use crate::{Result, RiftError};

/// Matching-stage settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MatchParams<T> {
    /// Consensus transfer-error threshold in pixels.
    pub inlier_threshold: T,
    /// Random minimal samples drawn by the consensus loop.
    pub ransac_iterations: usize,
    /// Seed for the consensus sampler.
    pub seed: u64,
    /// Keep a candidate only when both sides are each other's nearest
    /// neighbour; disable for plain one-directional nearest matching.
    pub mutual_nearest: bool,
}

impl<T: Scalar> Default for MatchParams<T> {
    fn default() -> Self {
        MatchParams {
            inlier_threshold: cast(3.0),
            ransac_iterations: 2048,
            seed: 0,
            mutual_nearest: true,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct RiftConfig<T: Scalar> {
    pub filter: FilterBankParams<T>,
    pub pc: PcParams<T>,
    pub detect: DetectParams<T>,
    /// Descriptor patch side length in pixels; must be a multiple of 6.
    pub patch_size: usize,
    pub matching: MatchParams<T>,
}

impl<T: Scalar> Default for RiftConfig<T> {
    fn default() -> Self {
        RiftConfig {
            filter: FilterBankParams::default(),
            pc: PcParams::default(),
            detect: DetectParams::default(),
            patch_size: 96,
            matching: MatchParams::default(),
        }
    }
}

impl<T: Scalar> RiftConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.pc.validate()?;
        self.detect.validate()?;
        if self.patch_size == 0 || self.patch_size % 6 != 0 {
            return Err(RiftError::InvalidParams(format!(
                "patch_size {} must be a positive multiple of 6",
                self.patch_size
            )));
        }
        if self.detect.border_margin < self.patch_size / 2 {
            return Err(RiftError::InvalidParams(format!(
                "border_margin {} must be at least patch_size/2 = {}",
                self.detect.border_margin,
                self.patch_size / 2
            )));
        }
        if self.matching.inlier_threshold <= T::zero() {
            return Err(RiftError::InvalidParams(
                "inlier_threshold must be > 0".into(),
            ));
        }
        if self.matching.ransac_iterations == 0 {
            return Err(RiftError::InvalidParams(
                "ransac_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Serializes to the human-editable TOML config format.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| RiftError::Config(e.to_string()))
    }

    /// Parses the TOML config format; missing keys fall back to defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RiftError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which side of the asymmetric description scheme an image plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Described once, from the shift-0 index map.
    Reference,
    /// Described once per cyclic variant.
    Target,
}

/// Keypoints and descriptors extracted from one image.
#[derive(Debug, Clone)]
pub struct ImageFeatures<T> {
    pub role: Role,
    pub width: usize,
    pub height: usize,
    /// Keypoints that were successfully described, orientations assigned.
    pub keypoints: Vec<Keypoint<T>>,
    /// One descriptor set per keypoint: a single entry for the reference
    /// role, one entry per MIM variant for the target role.
    pub descriptors: Vec<Vec<Descriptor<T>>>,
}

/// Retained stage intermediates for debugging and export.
#[derive(Debug, Clone)]
pub struct StageIntermediates<T> {
    pub pc: PcMaps<T>,
    pub moments: MomentMaps<T>,
    /// Shift-0 index map.
    pub mim: MaxIndexMap<T>,
    /// Per-orientation scale-summed amplitudes.
    pub summed_amplitude: Vec<Raster<T>>,
}

fn check_size<T: Scalar>(img: &Raster<T>, cfg: &RiftConfig<T>) -> Result<()> {
    let min = 2 * cfg.patch_size;
    if img.width() < min || img.height() < min {
        return Err(RiftError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

/// Detects and describes keypoints for one image.
pub fn extract_features<T: Scalar>(
    img: &Raster<T>,
    cfg: &RiftConfig<T>,
    role: Role,
) -> Result<ImageFeatures<T>> {
    Ok(extract_features_full(img, cfg, role, false)?.0)
}

/// Like [`extract_features`], optionally retaining stage intermediates.
pub fn extract_features_full<T: Scalar>(
    img: &Raster<T>,
    cfg: &RiftConfig<T>,
    role: Role,
    keep_intermediates: bool,
) -> Result<(ImageFeatures<T>, Option<StageIntermediates<T>>)> {
    cfg.validate()?;
    check_size(img, cfg)?;
    let (w, h) = img.dims();

    let bank = build_filter_bank(w, h, &cfg.filter)?;
    let seq = convolve(img, &bank)?;
    let pc = compute_pc(&seq, &cfg.pc)?;
    let moments = compute_moments(&pc)?;

    let corners = detect_corners(&moments, &cfg.detect)?;
    let edges = detect_edges(&moments, &cfg.detect)?;
    let keypoints = merge_keypoints(corners, edges, &cfg.detect);
    if keypoints.is_empty() {
        return Err(RiftError::NoKeypoints);
    }

    let n_variants = match role {
        Role::Reference => 1,
        Role::Target => cfg.filter.n_orientations,
    };
    let mims: Vec<MaxIndexMap<T>> = (0..n_variants)
        .map(|k| build_mim(&seq, k))
        .collect::<Result<_>>()?;

    let orientation_radius = cfg.patch_size / 2;
    let described: Vec<Option<(Keypoint<T>, Vec<Descriptor<T>>)>> = keypoints
        .par_iter()
        .map(|kp| {
            let mut kp = *kp;
            let dom = dominant_orientation(&mims[0], &kp, orientation_radius).ok()?;
            kp.orientation = dom.angle;
            let descs = describe(&mims, &kp, cfg.patch_size).ok()?;
            Some((kp, descs))
        })
        .collect();

    let mut out_kps = Vec::new();
    let mut out_descs = Vec::new();
    for item in described.into_iter().flatten() {
        out_kps.push(item.0);
        out_descs.push(item.1);
    }
    if out_kps.is_empty() {
        return Err(RiftError::NoKeypoints);
    }

    let features = ImageFeatures {
        role,
        width: w,
        height: h,
        keypoints: out_kps,
        descriptors: out_descs,
    };
    let intermediates = keep_intermediates.then(|| StageIntermediates {
        pc,
        moments,
        mim: mims[0].clone(),
        summed_amplitude: seq.summed_amplitude.clone(),
    });
    Ok((features, intermediates))
}

/// Matches previously extracted reference features against target features.
pub fn match_features<T: Scalar>(
    reference: &ImageFeatures<T>,
    target: &ImageFeatures<T>,
    cfg: &RiftConfig<T>,
) -> Result<MatchResult<T>> {
    if reference.role != Role::Reference || target.role != Role::Target {
        return Err(RiftError::InvalidParams(
            "match_features needs (reference, target) roles in that order".into(),
        ));
    }
    let ref_flat: Vec<Descriptor<T>> = reference
        .descriptors
        .iter()
        .map(|set| set[0].clone())
        .collect();
    let candidates = match_nn(&ref_flat, &target.descriptors, cfg.matching.mutual_nearest)?;
    remove_outliers(
        &candidates,
        cfg.matching.inlier_threshold,
        cfg.matching.ransac_iterations,
        cfg.matching.seed,
    )
}

/// Runs the full pipeline on an image pair.
///
/// Genuine input problems (image too small, zero keypoints) are errors;
/// a pair that simply cannot be matched comes back as an explicit failure
/// result with `is_success() == false`.
pub fn match_pair<T: Scalar>(
    reference: &Raster<T>,
    target: &Raster<T>,
    cfg: &RiftConfig<T>,
) -> Result<MatchResult<T>> {
    cfg.validate()?;
    check_size(reference, cfg)?;
    check_size(target, cfg)?;
    let (ref_features, tgt_features) = rayon::join(
        || extract_features(reference, cfg, Role::Reference),
        || extract_features(target, cfg, Role::Target),
    );
    match_features(&ref_features?, &tgt_features?, cfg)
}
