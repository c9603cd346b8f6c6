//! Keypoint extraction from the moment maps.
//!
//! Corners are strict local maxima of the minimum moment map above a
//! percentile floor; edges come from a FAST-9 segment test on the
//! normalized maximum moment map. Both sets honor a border margin wide
//! enough for descriptor patches and are merged with duplicate
//! suppression, corners winning.

use serde::{Deserialize, Serialize};

use crate::imgproc::{normalize_minmax, Raster};
use crate::num::{cast, cast_usize, Scalar};
use crate::phasecong::MomentMaps;
use crate::{Result, RiftError};

/// Keypoint source map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeypointKind {
    Corner,
    Edge,
}

/// A detected feature point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint<T> {
    pub x: T,
    pub y: T,
    pub kind: KeypointKind,
    /// Moment value for corners, FAST score for edges.
    pub strength: T,
    /// Dominant orientation in radians; zero until assigned.
    pub orientation: T,
}

/// Detection thresholds and caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DetectParams<T> {
    /// Non-max suppression radius in pixels (>= 1, Euclidean).
    pub nms_radius: usize,
    pub max_corners: usize,
    pub max_edges: usize,
    /// FAST segment-test threshold on the min-max normalized edge map.
    pub fast_threshold: T,
    /// Minimum distance from every border; must cover the rotated
    /// descriptor patch (ceil(J/sqrt(2)) for a J-pixel patch).
    pub border_margin: usize,
    /// Corner floor as a quantile of the nonzero cornerness values.
    pub corner_percentile: T,
}

impl<T: Scalar> Default for DetectParams<T> {
    fn default() -> Self {
        DetectParams {
            nms_radius: 3,
            max_corners: 2500,
            max_edges: 2500,
            fast_threshold: cast(0.05),
            // ceil(96 / sqrt(2)) + 1: a 96px patch may rotate freely
            border_margin: 69,
            corner_percentile: cast(0.8),
        }
    }
}

impl<T: Scalar> DetectParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.nms_radius < 1 {
            return Err(RiftError::InvalidParams("nms_radius must be >= 1".into()));
        }
        if self.max_corners < 1 || self.max_edges < 1 {
            return Err(RiftError::InvalidParams(
                "keypoint caps must be >= 1".into(),
            ));
        }
        if self.fast_threshold <= T::zero() || self.fast_threshold >= T::one() {
            return Err(RiftError::InvalidParams(
                "fast_threshold must lie in (0, 1)".into(),
            ));
        }
        if self.corner_percentile <= T::zero() || self.corner_percentile >= T::one() {
            return Err(RiftError::InvalidParams(
                "corner_percentile must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Nearest-rank percentile of the nonzero values; `None` when all zero.
fn nonzero_percentile<T: Scalar>(values: &[T], q: T) -> Option<T> {
    let mut nz: Vec<T> = values.iter().copied().filter(|&v| v > T::zero()).collect();
    if nz.is_empty() {
        return None;
    }
    nz.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = cast_usize::<T>(nz.len());
    let rank = (q * n).ceil().to_usize().unwrap_or(1).clamp(1, nz.len());
    Some(nz[rank - 1])
}

/// Keeps candidates that dominate every pixel of `scores` within
/// `radius` (Euclidean); exact ties are broken toward the smaller
/// row-major index.
fn non_max_suppression<T: Scalar>(
    scores: &Raster<T>,
    candidates: &[usize],
    radius: usize,
) -> Vec<usize> {
    let (w, h) = scores.dims();
    let r = radius as isize;
    let r2 = (radius * radius) as isize;
    let data = scores.as_slice();
    let mut survivors = Vec::new();
    'cand: for &i in candidates {
        let x = (i % w) as isize;
        let y = (i / w) as isize;
        let v = data[i];
        for dy in -r..=r {
            let yy = y + dy;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            for dx in -r..=r {
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let xx = x + dx;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                let j = (yy as usize) * w + xx as usize;
                if j == i {
                    continue;
                }
                let u = data[j];
                if u > v || (u == v && j < i) {
                    continue 'cand;
                }
            }
        }
        survivors.push(i);
    }
    survivors
}

fn within_margin(x: usize, y: usize, w: usize, h: usize, margin: usize) -> bool {
    x >= margin && y >= margin && x + margin < w && y + margin < h
}

fn take_strongest<T: Scalar>(mut kps: Vec<Keypoint<T>>, cap: usize) -> Vec<Keypoint<T>> {
    kps.sort_by(|a, b| {
        b.strength
            .partial_cmp(&a.strength)
            .expect("finite strengths")
            .then_with(|| {
                (a.y, a.x)
                    .partial_cmp(&(b.y, b.x))
                    .expect("finite coordinates")
            })
    });
    kps.truncate(cap);
    kps
}

/// Corner keypoints: strict local maxima of the minimum moment map above
/// the configured percentile of its nonzero values.
pub fn detect_corners<T: Scalar>(
    moments: &MomentMaps<T>,
    params: &DetectParams<T>,
) -> Result<Vec<Keypoint<T>>> {
    params.validate()?;
    let map = &moments.min_moment;
    let (w, h) = map.dims();
    let Some(floor) = nonzero_percentile(map.as_slice(), params.corner_percentile) else {
        return Ok(Vec::new());
    };

    let data = map.as_slice();
    let candidates: Vec<usize> = (0..data.len())
        .filter(|&i| data[i] >= floor && within_margin(i % w, i / w, w, h, params.border_margin))
        .collect();
    let survivors = non_max_suppression(map, &candidates, params.nms_radius);

    let kps = survivors
        .into_iter()
        .map(|i| Keypoint {
            x: cast_usize(i % w),
            y: cast_usize(i / w),
            kind: KeypointKind::Corner,
            strength: data[i],
            orientation: T::zero(),
        })
        .collect();
    Ok(take_strongest(kps, params.max_corners))
}

/// Bresenham circle of radius 3 used by the segment test.
const FAST_RING: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const FAST_ARC: usize = 9;

/// FAST-9 score: the largest threshold at which some contiguous arc of 9
/// ring pixels is uniformly brighter or darker than the center. Zero when
/// the segment test cannot pass at any positive threshold.
fn fast_score<T: Scalar>(map: &Raster<T>, x: usize, y: usize) -> T {
    let c = map.get(x, y);
    let mut ring = [T::zero(); 16];
    for (k, (dx, dy)) in FAST_RING.iter().enumerate() {
        ring[k] = map.get((x as isize + dx) as usize, (y as isize + dy) as usize);
    }
    let mut best = T::zero();
    for start in 0..16 {
        let mut arc_min = T::infinity();
        let mut arc_max = T::neg_infinity();
        for k in 0..FAST_ARC {
            let v = ring[(start + k) % 16];
            if v < arc_min {
                arc_min = v;
            }
            if v > arc_max {
                arc_max = v;
            }
        }
        let dark = c - arc_max;
        let bright = arc_min - c;
        if dark > best {
            best = dark;
        }
        if bright > best {
            best = bright;
        }
    }
    best
}

/// Edge keypoints: FAST-9 on the min-max normalized maximum moment map,
/// with non-max suppression on the FAST score.
pub fn detect_edges<T: Scalar>(
    moments: &MomentMaps<T>,
    params: &DetectParams<T>,
) -> Result<Vec<Keypoint<T>>> {
    params.validate()?;
    let map = normalize_minmax(&moments.max_moment);
    let (w, h) = map.dims();
    let margin = params.border_margin.max(3);
    if w <= 2 * margin || h <= 2 * margin {
        return Ok(Vec::new());
    }

    let mut scores = Raster::zeros(w, h);
    let mut candidates = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let s = fast_score(&map, x, y);
            if s > params.fast_threshold {
                scores.set(x, y, s);
                candidates.push(y * w + x);
            }
        }
    }
    let survivors = non_max_suppression(&scores, &candidates, params.nms_radius);

    let kps = survivors
        .into_iter()
        .map(|i| Keypoint {
            x: cast_usize(i % w),
            y: cast_usize(i / w),
            kind: KeypointKind::Edge,
            strength: scores.as_slice()[i],
            orientation: T::zero(),
        })
        .collect();
    Ok(take_strongest(kps, params.max_edges))
}

/// Union of corner and edge keypoints; edge keypoints within `nms_radius`
/// of a corner are dropped, and the result is capped at
/// `max_corners + max_edges`.
pub fn merge_keypoints<T: Scalar>(
    corners: Vec<Keypoint<T>>,
    edges: Vec<Keypoint<T>>,
    params: &DetectParams<T>,
) -> Vec<Keypoint<T>> {
    let r2 = cast_usize::<T>(params.nms_radius * params.nms_radius);
    let mut merged = corners.clone();
    for e in edges {
        let clashes = corners.iter().any(|c| {
            let dx = e.x - c.x;
            let dy = e.y - c.y;
            dx * dx + dy * dy <= r2
        });
        if !clashes {
            merged.push(e);
        }
    }
    merged.truncate(params.max_corners + params.max_edges);
    merged
}
