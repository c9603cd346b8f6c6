//! Ground-truth evaluation and the rotation sweep harness.
//!
//! A match is scored against a ground-truth affine: residuals of the
//! inlier correspondences under the true transform give the number of
//! correct matches (NCM, residual under 3 px by default), the mean error
//! and RMSE over those correct matches, and the success flag (NCM >= 4).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imgproc::{load_grayscale, warp_affine, AffineTransform, Raster};
use crate::matching::{estimate_affine, transfer_residuals, MatchResult, MIN_INLIERS_SUCCESS};
use crate::num::{cast, cast_usize, Scalar};
use crate::pipeline::{extract_features, match_features, RiftConfig, Role};
use crate::{Result, RiftError};

/// Number of correspondences a ground-truth file must carry.
pub const GROUND_TRUTH_POINTS: usize = 5;
/// Maximum RMSE (pixels) a supplied ground truth may have on its own points.
const GROUND_TRUTH_MAX_RMSE: f64 = 1.0;

/// Reference-to-target ground-truth transform.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub affine: AffineTransform<T>,
    /// The five correspondences the affine was fit from, when supplied as
    /// points.
    pub source_points: Option<[((T, T), (T, T)); GROUND_TRUTH_POINTS]>,
}

/// On-disk ground-truth format: either six affine coefficients or exactly
/// five `[ref_x, ref_y, tgt_x, tgt_y]` correspondences.
#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthFile<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    affine: Option<[T; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<[T; 4]>>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn from_affine(affine: AffineTransform<T>) -> Result<Self> {
        affine.inverse()?;
        Ok(GroundTruth {
            affine,
            source_points: None,
        })
    }

    /// Fits the affine to exactly five correspondences and validates the
    /// fit (RMSE below 1 px).
    pub fn from_points(points: &[((T, T), (T, T))]) -> Result<Self> {
        if points.len() != GROUND_TRUTH_POINTS {
            return Err(RiftError::InvalidGroundTruth(format!(
                "need exactly {GROUND_TRUTH_POINTS} correspondences, got {}",
                points.len()
            )));
        }
        let affine = estimate_affine(points)?;
        let residuals = transfer_residuals(&affine, points);
        let mse = residuals
            .iter()
            .fold(T::zero(), |acc, &r| acc + r * r)
            / cast_usize::<T>(points.len());
        if mse.sqrt() >= cast(GROUND_TRUTH_MAX_RMSE) {
            return Err(RiftError::InvalidGroundTruth(format!(
                "affine fits the supplied points with RMSE {} px (must be < 1)",
                mse.sqrt()
            )));
        }
        let mut arr = [((T::zero(), T::zero()), (T::zero(), T::zero())); GROUND_TRUTH_POINTS];
        arr.copy_from_slice(points);
        Ok(GroundTruth {
            affine,
            source_points: Some(arr),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GroundTruthFile<T> = serde_json::from_str(text)
            .map_err(|e| RiftError::InvalidGroundTruth(e.to_string()))?;
        match (file.affine, file.points) {
            (Some(c), None) => Self::from_affine(AffineTransform::from_coefficients(c)),
            (None, Some(pts)) => {
                let pairs: Vec<((T, T), (T, T))> = pts
                    .iter()
                    .map(|p| ((p[0], p[1]), (p[2], p[3])))
                    .collect();
                Self::from_points(&pairs)
            }
            _ => Err(RiftError::InvalidGroundTruth(
                "provide exactly one of `affine` or `points`".into(),
            )),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RiftError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Metrics of one evaluated image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport<T> {
    /// Correct matches: inliers within the residual threshold of the truth.
    pub ncm: usize,
    /// Mean residual over correct matches (0 when there are none).
    pub me: T,
    /// Root-mean-square residual over correct matches (0 when none).
    pub rmse: T,
    /// NCM >= 4.
    pub success: bool,
    /// Wall-clock matching time, filled in by the caller.
    pub runtime_seconds: f64,
}

impl<T: Scalar> EvaluationReport<T> {
    pub fn with_runtime(mut self, seconds: f64) -> Self {
        self.runtime_seconds = seconds;
        self
    }
}

/// Scores a match result against ground truth.
///
/// Residuals are Euclidean distances between the truth-mapped reference
/// keypoint and the matched target keypoint, over inlier correspondences.
pub fn evaluate<T: Scalar>(
    result: &MatchResult<T>,
    gt: &GroundTruth<T>,
    threshold: T,
) -> EvaluationReport<T> {
    let mut correct = Vec::new();
    for c in result.correspondences.iter().filter(|c| c.inlier) {
        let (px, py) = gt.affine.apply(c.ref_kp.x, c.ref_kp.y);
        let dx = px - c.tgt_kp.x;
        let dy = py - c.tgt_kp.y;
        let residual = (dx * dx + dy * dy).sqrt();
        if residual < threshold {
            correct.push(residual);
        }
    }
    let ncm = correct.len();
    let (me, rmse) = if ncm == 0 {
        (T::zero(), T::zero())
    } else {
        let n = cast_usize::<T>(ncm);
        let sum = correct.iter().fold(T::zero(), |acc, &r| acc + r);
        let sum_sq = correct.iter().fold(T::zero(), |acc, &r| acc + r * r);
        (sum / n, (sum_sq / n).sqrt())
    };
    EvaluationReport {
        ncm,
        me,
        rmse,
        success: ncm >= MIN_INLIERS_SUCCESS,
        runtime_seconds: 0.0,
    }
}

/// One angle of a rotation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry<T> {
    pub angle_deg: u32,
    pub inliers: usize,
    #[serde(flatten)]
    pub report: EvaluationReport<T>,
}

/// Full rotation sweep outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport<T> {
    pub step_deg: u32,
    pub entries: Vec<SweepEntry<T>>,
    /// Fraction of angles with a successful match.
    pub success_rate: f64,
}

/// Angles swept: multiples of `step` below 360, with 359 appended.
pub fn sweep_angles(step_deg: u32) -> Vec<u32> {
    let mut angles: Vec<u32> = (0..360).step_by(step_deg as usize).collect();
    if *angles.last().unwrap() != 359 {
        angles.push(359);
    }
    angles
}

/// Matches rotated copies of `image` against the original, one per sweep
/// angle; ground truth is the synthetic rotation itself.
pub fn rotation_sweep_image<T: Scalar>(
    image: &Raster<T>,
    cfg: &RiftConfig<T>,
    step_deg: u32,
) -> Result<SweepReport<T>> {
    if step_deg == 0 || step_deg >= 360 {
        return Err(RiftError::InvalidParams(
            "sweep step must lie in 1..=359 degrees".into(),
        ));
    }
    cfg.validate()?;
    let reference = extract_features(image, cfg, Role::Reference)?;
    let (w, h) = image.dims();
    let cx = (cast_usize::<T>(w) - T::one()) / cast(2.0);
    let cy = (cast_usize::<T>(h) - T::one()) / cast(2.0);

    let angles = sweep_angles(step_deg);
    let entries: Result<Vec<SweepEntry<T>>> = angles
        .par_iter()
        .map(|&angle_deg| {
            let start = std::time::Instant::now();
            let angle = cast::<T>(f64::from(angle_deg).to_radians());
            let rot = AffineTransform::rotation_about(cx, cy, angle);
            let rotated = warp_affine(image, &rot, (w, h))?;
            let target = extract_features(&rotated, cfg, Role::Target)?;
            let result = match_features(&reference, &target, cfg)?;
            let gt = GroundTruth::from_affine(rot)?;
            let report = evaluate(&result, &gt, cfg.matching.inlier_threshold)
                .with_runtime(start.elapsed().as_secs_f64());
            Ok(SweepEntry {
                angle_deg,
                inliers: result.inlier_count,
                report,
            })
        })
        .collect();
    let entries = entries?;

    let successes = entries.iter().filter(|e| e.report.success).count();
    let success_rate = successes as f64 / entries.len() as f64;
    Ok(SweepReport {
        step_deg,
        entries,
        success_rate,
    })
}

/// [`rotation_sweep_image`] reading the reference image from disk.
pub fn rotation_sweep<T: Scalar>(
    reference: &Path,
    cfg: &RiftConfig<T>,
    step_deg: u32,
) -> Result<SweepReport<T>> {
    let image = load_grayscale(reference)?;
    rotation_sweep_image(&image, cfg, step_deg)
}
