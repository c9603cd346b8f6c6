//! Descriptor matching and robust affine estimation.
//!
//! Candidates pair each reference descriptor with its globally nearest
//! target descriptor over all keypoints and all cyclic MIM variants, with
//! optional mutual-nearest filtering. Outliers are removed by repeated
//! minimal-sample affine fits: the largest consensus under a pixel
//! threshold wins and is refit by least squares over all its inliers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::describe::Descriptor;
use crate::detect::Keypoint;
use crate::imgproc::AffineTransform;
use crate::num::{cast, Scalar};
use crate::{Result, RiftError};

/// Minimum inlier count for a match to count as a success.
pub const MIN_INLIERS_SUCCESS: usize = 4;

/// A candidate (or confirmed) correspondence between two keypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence<T> {
    pub ref_kp: Keypoint<T>,
    pub tgt_kp: Keypoint<T>,
    /// Euclidean descriptor distance.
    pub distance: T,
    /// Winning MIM variant of the target descriptor.
    pub variant: usize,
    pub inlier: bool,
}

/// Outcome of matching one image pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchResult<T> {
    pub correspondences: Vec<Correspondence<T>>,
    /// Present whenever at least a minimal consensus (3 inliers) was found.
    pub affine: Option<AffineTransform<T>>,
    pub inlier_count: usize,
}

impl<T> MatchResult<T> {
    /// Failure is explicit: fewer than [`MIN_INLIERS_SUCCESS`] inliers means
    /// the pair could not be matched.
    pub fn is_success(&self) -> bool {
        self.inlier_count >= MIN_INLIERS_SUCCESS
    }

    pub(crate) fn failure(correspondences: Vec<Correspondence<T>>) -> Self {
        MatchResult {
            correspondences,
            affine: None,
            inlier_count: 0,
        }
    }
}

#[inline]
fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc = acc + d * d;
    }
    acc
}

/// Smallest squared distance from `ref_desc` to any non-degenerate variant
/// descriptor of the target keypoint, with the winning variant.
fn best_variant<T: Scalar>(ref_desc: &Descriptor<T>, tgt_set: &[Descriptor<T>]) -> (T, usize) {
    let mut best = T::infinity();
    let mut variant = 0;
    for d in tgt_set {
        if d.degenerate {
            continue;
        }
        let dist = squared_distance(&ref_desc.vector, &d.vector);
        if dist < best {
            best = dist;
            variant = d.shift;
        }
    }
    (best, variant)
}

/// Nearest-neighbour candidates from reference descriptors to target
/// descriptor sets (one set of variant descriptors per target keypoint).
///
/// With `mutual` set, a pair survives only if each side is the other's
/// nearest neighbour under the min-over-variants distance. Ties resolve
/// toward the smaller index on the opposite side.
pub fn match_nn<T: Scalar>(
    ref_descs: &[Descriptor<T>],
    tgt_desc_sets: &[Vec<Descriptor<T>>],
    mutual: bool,
) -> Result<Vec<Correspondence<T>>> {
    if ref_descs.is_empty() || tgt_desc_sets.is_empty() {
        return Err(RiftError::InvalidParams(
            "descriptor lists must be non-empty".into(),
        ));
    }
    let n_ref = ref_descs.len();
    let n_tgt = tgt_desc_sets.len();

    // min-over-variants squared distances, reference-major
    let matrix: Vec<T> = (0..n_ref)
        .into_par_iter()
        .flat_map_iter(|r| {
            let rd = &ref_descs[r];
            (0..n_tgt).map(move |t| {
                if rd.degenerate {
                    T::infinity()
                } else {
                    best_variant(rd, &tgt_desc_sets[t]).0
                }
            })
        })
        .collect();

    let mut tgt_best: Vec<(T, usize)> = vec![(T::infinity(), usize::MAX); n_tgt];
    for r in 0..n_ref {
        for t in 0..n_tgt {
            let d = matrix[r * n_tgt + t];
            if d < tgt_best[t].0 {
                tgt_best[t] = (d, r);
            }
        }
    }

    let mut out = Vec::new();
    for (r, rd) in ref_descs.iter().enumerate() {
        if rd.degenerate {
            continue;
        }
        let row = &matrix[r * n_tgt..(r + 1) * n_tgt];
        let mut best = T::infinity();
        let mut best_t = usize::MAX;
        for (t, &d) in row.iter().enumerate() {
            if d < best {
                best = d;
                best_t = t;
            }
        }
        if best_t == usize::MAX || best.is_infinite() {
            continue;
        }
        if mutual && tgt_best[best_t].1 != r {
            continue;
        }
        let (_, variant) = best_variant(rd, &tgt_desc_sets[best_t]);
        out.push(Correspondence {
            ref_kp: rd.keypoint,
            tgt_kp: tgt_desc_sets[best_t][0].keypoint,
            distance: best.sqrt(),
            variant,
            inlier: false,
        });
    }
    Ok(out)
}

/// Least-squares affine from point pairs, with coordinate normalization
/// for conditioning. Needs three non-collinear pairs.
pub fn estimate_affine<T: Scalar>(pairs: &[((T, T), (T, T))]) -> Result<AffineTransform<T>> {
    if pairs.len() < 3 {
        return Err(RiftError::InvalidParams(format!(
            "affine estimation needs >= 3 pairs, got {}",
            pairs.len()
        )));
    }

    let normalizer = |points: &mut dyn Iterator<Item = (T, T)>| -> Result<AffineTransform<T>> {
        let pts: Vec<(T, T)> = points.collect();
        let n = cast::<T>(pts.len() as f64);
        let mut mx = T::zero();
        let mut my = T::zero();
        for &(x, y) in &pts {
            mx = mx + x;
            my = my + y;
        }
        mx = mx / n;
        my = my / n;
        let mut mean_dist = T::zero();
        for &(x, y) in &pts {
            let dx = x - mx;
            let dy = y - my;
            mean_dist = mean_dist + (dx * dx + dy * dy).sqrt();
        }
        mean_dist = mean_dist / n;
        if mean_dist <= T::zero() {
            return Err(RiftError::DegenerateGeometry);
        }
        let s = cast::<T>(std::f64::consts::SQRT_2) / mean_dist;
        Ok(AffineTransform {
            a11: s,
            a12: T::zero(),
            a21: T::zero(),
            a22: s,
            tx: -s * mx,
            ty: -s * my,
        })
    };

    let t_src = normalizer(&mut pairs.iter().map(|&(s, _)| s))?;
    let t_dst = normalizer(&mut pairs.iter().map(|&(_, d)| d))?;

    // normal equations over normalized source coordinates
    let mut m = [[T::zero(); 3]; 3];
    let mut rhs_x = [T::zero(); 3];
    let mut rhs_y = [T::zero(); 3];
    for &(src, dst) in pairs {
        let (x, y) = t_src.apply(src.0, src.1);
        let (u, v) = t_dst.apply(dst.0, dst.1);
        let row = [x, y, T::one()];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = m[i][j] + row[i] * row[j];
            }
            rhs_x[i] = rhs_x[i] + row[i] * u;
            rhs_y[i] = rhs_y[i] + row[i] * v;
        }
    }

    let solve = |m: [[T; 3]; 3], mut b: [T; 3]| -> Result<[T; 3]> {
        let mut a = m;
        let mut perm = [0usize, 1, 2];
        for col in 0..3 {
            let mut pivot = col;
            for row in col + 1..3 {
                if a[perm[row]][col].abs() > a[perm[pivot]][col].abs() {
                    pivot = row;
                }
            }
            perm.swap(col, pivot);
            let p = a[perm[col]][col];
            if p.abs() < cast(1e-10) {
                return Err(RiftError::DegenerateGeometry);
            }
            for row in col + 1..3 {
                let f = a[perm[row]][col] / p;
                for j in col..3 {
                    a[perm[row]][j] = a[perm[row]][j] - f * a[perm[col]][j];
                }
                b[perm[row]] = b[perm[row]] - f * b[perm[col]];
            }
        }
        let mut x = [T::zero(); 3];
        for col in (0..3).rev() {
            let mut acc = b[perm[col]];
            for j in col + 1..3 {
                acc = acc - a[perm[col]][j] * x[j];
            }
            x[col] = acc / a[perm[col]][col];
        }
        Ok(x)
    };

    let px = solve(m, rhs_x)?;
    let py = solve(m, rhs_y)?;
    let normalized = AffineTransform {
        a11: px[0],
        a12: px[1],
        a21: py[0],
        a22: py[1],
        tx: px[2],
        ty: py[2],
    };

    let t_dst_inv = t_dst.inverse()?;
    Ok(t_dst_inv.compose(&normalized.compose(&t_src)))
}

/// Euclidean transfer errors of `pairs` under `t`.
pub fn transfer_residuals<T: Scalar>(t: &AffineTransform<T>, pairs: &[((T, T), (T, T))]) -> Vec<T> {
    pairs
        .iter()
        .map(|&((sx, sy), (dx, dy))| {
            let (px, py) = t.apply(sx, sy);
            let ex = px - dx;
            let ey = py - dy;
            (ex * ex + ey * ey).sqrt()
        })
        .collect()
}

fn pair_of<T: Scalar>(c: &Correspondence<T>) -> ((T, T), (T, T)) {
    ((c.ref_kp.x, c.ref_kp.y), (c.tgt_kp.x, c.tgt_kp.y))
}

/// Random-sample affine consensus over candidate correspondences.
///
/// Deterministic for a fixed seed, and invariant to candidate order: the
/// sampler runs over a canonically sorted view. Fewer than three
/// candidates, or no non-degenerate sample, yields an explicit failure
/// result with zero inliers.
pub fn remove_outliers<T: Scalar>(
    candidates: &[Correspondence<T>],
    threshold: T,
    iterations: usize,
    seed: u64,
) -> Result<MatchResult<T>> {
    if threshold <= T::zero() {
        return Err(RiftError::InvalidParams("threshold must be > 0".into()));
    }
    if iterations == 0 {
        return Err(RiftError::InvalidParams("iterations must be >= 1".into()));
    }
    if candidates.len() < 3 {
        return Ok(MatchResult::failure(candidates.to_vec()));
    }

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        let a = &candidates[i];
        let b = &candidates[j];
        (a.ref_kp.y, a.ref_kp.x, a.tgt_kp.y, a.tgt_kp.x, a.distance)
            .partial_cmp(&(b.ref_kp.y, b.ref_kp.x, b.tgt_kp.y, b.tgt_kp.x, b.distance))
            .expect("finite keypoint data")
    });
    let sorted: Vec<((T, T), (T, T))> = order.iter().map(|&i| pair_of(&candidates[i])).collect();
    let n = sorted.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_consensus: Vec<usize> = Vec::new();
    for _ in 0..iterations {
        let sample = rand::seq::index::sample(&mut rng, n, 3);
        let minimal = [
            sorted[sample.index(0)],
            sorted[sample.index(1)],
            sorted[sample.index(2)],
        ];
        let Ok(model) = estimate_affine(&minimal) else {
            continue;
        };
        let mut consensus = Vec::new();
        for (k, pair) in sorted.iter().enumerate() {
            let (px, py) = model.apply(pair.0 .0, pair.0 .1);
            let ex = px - pair.1 .0;
            let ey = py - pair.1 .1;
            if (ex * ex + ey * ey).sqrt() < threshold {
                consensus.push(k);
            }
        }
        if consensus.len() > best_consensus.len() {
            best_consensus = consensus;
            if best_consensus.len() == n {
                break;
            }
        }
    }

    if best_consensus.len() < 3 {
        return Ok(MatchResult::failure(candidates.to_vec()));
    }

    let consensus_pairs: Vec<((T, T), (T, T))> =
        best_consensus.iter().map(|&k| sorted[k]).collect();
    let refit = estimate_affine(&consensus_pairs)?;

    let mut correspondences = candidates.to_vec();
    for &k in &best_consensus {
        correspondences[order[k]].inlier = true;
    }
    Ok(MatchResult {
        inlier_count: best_consensus.len(),
        affine: Some(refit),
        correspondences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::KeypointKind;
    use rand::Rng;

    fn kp(x: f64, y: f64) -> Keypoint<f64> {
        Keypoint {
            x,
            y,
            kind: KeypointKind::Corner,
            strength: 1.0,
            orientation: 0.0,
        }
    }

    fn desc(vector: Vec<f64>, keypoint: Keypoint<f64>, shift: usize) -> Descriptor<f64> {
        Descriptor {
            vector,
            keypoint,
            shift,
            degenerate: false,
        }
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
        unit((0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
    }

    #[test]
    fn self_match_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let descs: Vec<Descriptor<f64>> = (0..8)
            .map(|i| desc(random_unit(&mut rng, 16), kp(i as f64, i as f64), 0))
            .collect();
        let sets: Vec<Vec<Descriptor<f64>>> = descs.iter().map(|d| vec![d.clone()]).collect();
        let matches = match_nn(&descs, &sets, true).unwrap();
        assert_eq!(matches.len(), 8);
        for (i, m) in matches.iter().enumerate() {
            assert_eq!(m.tgt_kp.x, i as f64);
            assert_eq!(m.distance, 0.0);
        }
    }

    #[test]
    fn equidistant_targets_resolve_to_smaller_index() {
        let r = vec![desc(unit(vec![1.0, 0.0]), kp(0.0, 0.0), 0)];
        let twin = unit(vec![0.0, 1.0]);
        let sets = vec![
            vec![desc(twin.clone(), kp(5.0, 5.0), 0)],
            vec![desc(twin, kp(9.0, 9.0), 0)],
        ];
        let matches = match_nn(&r, &sets, false).unwrap();
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].tgt_kp.x, 5.0);
    }

    #[test]
    fn degenerate_descriptors_are_skipped() {
        let mut bad = desc(vec![0.0, 0.0], kp(0.0, 0.0), 0);
        bad.degenerate = true;
        let good = desc(unit(vec![1.0, 1.0]), kp(1.0, 1.0), 0);
        let sets = vec![vec![good.clone()]];
        let matches = match_nn(&[bad, good], &sets, false).unwrap();
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].ref_kp.x, 1.0);
    }

    /// Plain nested-loop transcription of nearest-neighbour matching with
    /// mutual filtering, independent of the production code path.
    fn oracle_match(
        ref_descs: &[Descriptor<f64>],
        tgt_sets: &[Vec<Descriptor<f64>>],
        mutual: bool,
    ) -> Vec<(usize, usize)> {
        let d = |a: &Descriptor<f64>, b: &Descriptor<f64>| -> f64 {
            a.vector
                .iter()
                .zip(&b.vector)
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        };
        let pair_dist = |r: usize, t: usize| -> f64 {
            tgt_sets[t]
                .iter()
                .filter(|v| !v.degenerate)
                .map(|v| d(&ref_descs[r], v))
                .fold(f64::INFINITY, f64::min)
        };
        let mut out = Vec::new();
        for r in 0..ref_descs.len() {
            if ref_descs[r].degenerate {
                continue;
            }
            let mut best_t = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..tgt_sets.len() {
                let dist = pair_dist(r, t);
                if dist < best {
                    best = dist;
                    best_t = t;
                }
            }
            if best.is_infinite() {
                continue;
            }
            if mutual {
                let mut best_r = usize::MAX;
                let mut col_best = f64::INFINITY;
                for r2 in 0..ref_descs.len() {
                    if ref_descs[r2].degenerate {
                        continue;
                    }
                    let dist = pair_dist(r2, best_t);
                    if dist < col_best {
                        col_best = dist;
                        best_r = r2;
                    }
                }
                if best_r != r {
                    continue;
                }
            }
            out.push((r, best_t));
        }
        out
    }

    #[test]
    fn matches_agree_with_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..10 {
            let n_ref = 5 + (trial % 3);
            let n_tgt = 5 + (trial % 4);
            let refs: Vec<Descriptor<f64>> = (0..n_ref)
                .map(|i| desc(random_unit(&mut rng, 12), kp(i as f64, 0.0), 0))
                .collect();
            let sets: Vec<Vec<Descriptor<f64>>> = (0..n_tgt)
                .map(|t| {
                    (0..3)
                        .map(|v| desc(random_unit(&mut rng, 12), kp(t as f64, 50.0), v))
                        .collect()
                })
                .collect();
            for mutual in [false, true] {
                let got: Vec<(usize, usize)> = match_nn(&refs, &sets, mutual)
                    .unwrap()
                    .iter()
                    .map(|c| (c.ref_kp.x as usize, c.tgt_kp.x as usize))
                    .collect();
                let want = oracle_match(&refs, &sets, mutual);
                assert_eq!(got, want, "trial {trial} mutual {mutual}");
            }
        }
    }

    #[test]
    fn identity_affine_from_three_pairs() {
        let pairs = [
            ((0.0, 0.0), (0.0, 0.0)),
            ((10.0, 0.0), (10.0, 0.0)),
            ((0.0, 10.0), (0.0, 10.0)),
        ];
        let t = estimate_affine(&pairs).unwrap();
        let id = AffineTransform::<f64>::identity();
        for (a, b) in t.coefficients().iter().zip(id.coefficients()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn known_transform_is_recovered_exactly() {
        let truth = AffineTransform::rotation_about(0.0, 0.0, 30f64.to_radians())
            .compose(&AffineTransform::translation(5.0, -2.0));
        let pairs: Vec<((f64, f64), (f64, f64))> = [
            (3.0, 7.0),
            (-14.0, 2.5),
            (21.0, -9.0),
            (4.4, 18.0),
            (-6.0, -6.0),
        ]
        .iter()
        .map(|&(x, y)| ((x, y), truth.apply(x, y)))
        .collect();
        let t = estimate_affine(&pairs).unwrap();
        for (a, b) in t.coefficients().iter().zip(truth.coefficients()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pairs = [
            ((0.0, 0.0), (1.0, 1.0)),
            ((1.0, 1.0), (2.0, 2.0)),
            ((2.0, 2.0), (3.0, 3.0)),
        ];
        assert!(matches!(
            estimate_affine(&pairs),
            Err(RiftError::DegenerateGeometry)
        ));
    }

    fn consistent_candidates(t: &AffineTransform<f64>, n: usize, seed: u64) -> Vec<Correspondence<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = rng.gen_range(20.0..480.0f64).round();
                let y = rng.gen_range(20.0..480.0f64).round();
                let (u, v) = t.apply(x, y);
                Correspondence {
                    ref_kp: kp(x, y),
                    tgt_kp: kp(u, v),
                    distance: 0.1,
                    variant: 0,
                    inlier: false,
                }
            })
            .collect()
    }

    #[test]
    fn noise_free_consensus_keeps_everything() {
        let truth = AffineTransform::rotation_about(250.0, 250.0, 0.4)
            .compose(&AffineTransform::translation(12.0, -3.0));
        let cands = consistent_candidates(&truth, 20, 2);
        let result = remove_outliers(&cands, 3.0, 500, 7).unwrap();
        assert_eq!(result.inlier_count, 20);
        assert!(result.correspondences.iter().all(|c| c.inlier));
        let got = result.affine.unwrap();
        for (a, b) in got.coefficients().iter().zip(truth.coefficients()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn outliers_are_rejected() {
        let truth = AffineTransform::translation(40.0, -25.0);
        let mut cands = consistent_candidates(&truth, 15, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let c = Correspondence {
                ref_kp: kp(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)),
                tgt_kp: kp(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)),
                distance: 0.5,
                variant: 0,
                inlier: false,
            };
            cands.push(c);
        }
        let result = remove_outliers(&cands, 3.0, 1000, 11).unwrap();
        assert_eq!(result.inlier_count, 15);
        for (i, c) in result.correspondences.iter().enumerate() {
            assert_eq!(c.inlier, i < 15, "candidate {i}");
        }
    }

    #[test]
    fn too_few_candidates_is_an_explicit_failure() {
        let cands = consistent_candidates(&AffineTransform::identity(), 2, 4);
        let result = remove_outliers(&cands, 3.0, 100, 0).unwrap();
        assert!(!result.is_success());
        assert_eq!(result.inlier_count, 0);
        assert!(result.affine.is_none());
        assert_eq!(result.correspondences.len(), 2);
    }

    #[test]
    fn consensus_is_order_invariant() {
        let truth = AffineTransform::rotation_about(100.0, 100.0, -0.2);
        let mut cands = consistent_candidates(&truth, 12, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..4 {
            cands.push(Correspondence {
                ref_kp: kp(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)),
                tgt_kp: kp(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)),
                distance: 0.5,
                variant: 0,
                inlier: false,
            });
        }
        let base = remove_outliers(&cands, 3.0, 800, 5).unwrap();
        let mut shuffled = cands.clone();
        shuffled.reverse();
        shuffled.swap(0, 7);
        let permuted = remove_outliers(&shuffled, 3.0, 800, 5).unwrap();

        let key = |c: &Correspondence<f64>| (c.ref_kp.x as i64, c.ref_kp.y as i64);
        let mut a: Vec<_> = base
            .correspondences
            .iter()
            .filter(|c| c.inlier)
            .map(key)
            .collect();
        let mut b: Vec<_> = permuted
            .correspondences
            .iter()
            .filter(|c| c.inlier)
            .map(key)
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        let ta = base.affine.unwrap();
        let tb = permuted.affine.unwrap();
        for (x, y) in ta.coefficients().iter().zip(tb.coefficients()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
