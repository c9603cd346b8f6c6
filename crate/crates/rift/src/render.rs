//! Match visualization: side-by-side composites with keypoint markers and
//! correspondence lines.
//!
//! Follows the usual figure convention: red circles mark reference
//! keypoints, green crosshairs target keypoints, yellow lines correct
//! matches and red lines outliers.

use image::{Rgb, RgbImage};

use crate::detect::Keypoint;
use crate::imgproc::Raster;
use crate::matching::MatchResult;
use crate::num::Scalar;

pub const COLOR_REFERENCE: Rgb<u8> = Rgb([255, 0, 0]);
pub const COLOR_TARGET: Rgb<u8> = Rgb([0, 255, 0]);
pub const COLOR_INLIER: Rgb<u8> = Rgb([255, 255, 0]);
pub const COLOR_OUTLIER: Rgb<u8> = Rgb([255, 0, 0]);

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Integer Bresenham line rasterization.
pub fn line_pixels(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let mut pts = Vec::new();
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        pts.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    pts
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    for (x, y) in line_pixels(x0, y0, x1, y1) {
        put(img, x, y, color);
    }
}

fn draw_circle(img: &mut RgbImage, cx: i64, cy: i64, r: i64, color: Rgb<u8>) {
    let mut x = r;
    let mut y = 0i64;
    let mut err = 1 - r;
    while x >= y {
        for (px, py) in [
            (cx + x, cy + y),
            (cx - x, cy + y),
            (cx + x, cy - y),
            (cx - x, cy - y),
            (cx + y, cy + x),
            (cx - y, cy + x),
            (cx + y, cy - x),
            (cx - y, cy - x),
        ] {
            put(img, px, py, color);
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
}

fn draw_crosshair(img: &mut RgbImage, cx: i64, cy: i64, arm: i64, color: Rgb<u8>) {
    for d in -arm..=arm {
        put(img, cx + d, cy, color);
        put(img, cx, cy + d, color);
    }
}

fn to_i64<T: Scalar>(v: T) -> i64 {
    v.round().to_i64().unwrap_or(0)
}

/// Renders a side-by-side composite of the pair with keypoint markers and
/// one line per correspondence (yellow for inliers, red for outliers).
pub fn render_matches<T: Scalar>(
    reference: &Raster<T>,
    target: &Raster<T>,
    ref_keypoints: &[Keypoint<T>],
    tgt_keypoints: &[Keypoint<T>],
    result: &MatchResult<T>,
) -> RgbImage {
    let w = (reference.width() + target.width()) as u32;
    let h = reference.height().max(target.height()) as u32;
    let offset = reference.width() as i64;

    let mut img = RgbImage::new(w, h);
    let ref_gray = reference.to_gray8();
    for (x, y, p) in ref_gray.enumerate_pixels() {
        img.put_pixel(x, y, Rgb([p.0[0], p.0[0], p.0[0]]));
    }
    let tgt_gray = target.to_gray8();
    for (x, y, p) in tgt_gray.enumerate_pixels() {
        img.put_pixel(x + offset as u32, y, Rgb([p.0[0], p.0[0], p.0[0]]));
    }

    for kp in ref_keypoints {
        draw_circle(&mut img, to_i64(kp.x), to_i64(kp.y), 3, COLOR_REFERENCE);
    }
    for kp in tgt_keypoints {
        draw_crosshair(&mut img, to_i64(kp.x) + offset, to_i64(kp.y), 3, COLOR_TARGET);
    }

    // outlier lines first so correct matches stay visible on top
    for c in result.correspondences.iter().filter(|c| !c.inlier) {
        draw_line(
            &mut img,
            to_i64(c.ref_kp.x),
            to_i64(c.ref_kp.y),
            to_i64(c.tgt_kp.x) + offset,
            to_i64(c.tgt_kp.y),
            COLOR_OUTLIER,
        );
    }
    for c in result.correspondences.iter().filter(|c| c.inlier) {
        draw_line(
            &mut img,
            to_i64(c.ref_kp.x),
            to_i64(c.ref_kp.y),
            to_i64(c.tgt_kp.x) + offset,
            to_i64(c.tgt_kp.y),
            COLOR_INLIER,
        );
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::KeypointKind;
    use crate::matching::Correspondence;

    fn kp(x: f64, y: f64) -> Keypoint<f64> {
        Keypoint {
            x,
            y,
            kind: KeypointKind::Corner,
            strength: 1.0,
            orientation: 0.0,
        }
    }

    fn corr(rx: f64, ry: f64, tx: f64, ty: f64, inlier: bool) -> Correspondence<f64> {
        Correspondence {
            ref_kp: kp(rx, ry),
            tgt_kp: kp(tx, ty),
            distance: 0.2,
            variant: 0,
            inlier,
        }
    }

    fn flat(w: usize, h: usize, v: f64) -> Raster<f64> {
        Raster::from_vec(w, h, vec![v; w * h]).unwrap()
    }

    #[test]
    fn keypoints_only_composite() {
        let result = MatchResult::<f64> {
            correspondences: vec![],
            affine: None,
            inlier_count: 0,
        };
        let img = render_matches(
            &flat(60, 40, 0.0),
            &flat(60, 40, 0.0),
            &[kp(20.0, 20.0)],
            &[kp(30.0, 10.0)],
            &result,
        );
        assert_eq!(img.dimensions(), (120, 40));
        let yellow = img.pixels().filter(|p| **p == COLOR_INLIER).count();
        assert_eq!(yellow, 0);
        let red = img.pixels().filter(|p| **p == COLOR_REFERENCE).count();
        assert!(red > 0, "reference circle missing");
        assert_eq!(*img.get_pixel(60 + 30, 10), COLOR_TARGET);
    }

    #[test]
    fn single_inlier_draws_one_yellow_line() {
        let result = MatchResult::<f64> {
            correspondences: vec![corr(10.0, 30.0, 25.0, 5.0, true)],
            affine: None,
            inlier_count: 1,
        };
        let img = render_matches(
            &flat(60, 40, 0.0),
            &flat(60, 40, 0.0),
            &[],
            &[],
            &result,
        );
        let expected = line_pixels(10, 30, 60 + 25, 5);
        for &(x, y) in &expected {
            assert_eq!(*img.get_pixel(x as u32, y as u32), COLOR_INLIER);
        }
        let yellow = img.pixels().filter(|p| **p == COLOR_INLIER).count();
        assert_eq!(yellow, expected.len());
    }

    #[test]
    fn mixed_matches_draw_yellow_and_red_segments() {
        // well-separated segments so the traced pixel sets stay disjoint
        let correspondences = vec![
            corr(5.0, 5.0, 5.0, 5.0, true),
            corr(5.0, 20.0, 5.0, 20.0, true),
            corr(5.0, 35.0, 5.0, 35.0, true),
            corr(5.0, 50.0, 5.0, 50.0, false),
            corr(5.0, 65.0, 5.0, 65.0, false),
        ];
        let result = MatchResult::<f64> {
            correspondences: correspondences.clone(),
            affine: None,
            inlier_count: 3,
        };
        let img = render_matches(&flat(80, 80, 0.0), &flat(80, 80, 0.0), &[], &[], &result);

        let mut yellow_expected = 0usize;
        let mut red_expected = 0usize;
        for c in &correspondences {
            let pts = line_pixels(
                c.ref_kp.x as i64,
                c.ref_kp.y as i64,
                c.tgt_kp.x as i64 + 80,
                c.tgt_kp.y as i64,
            );
            // endpoints carry the line color
            let (x0, y0) = pts[0];
            let (x1, y1) = *pts.last().unwrap();
            let color = if c.inlier { COLOR_INLIER } else { COLOR_OUTLIER };
            assert_eq!(*img.get_pixel(x0 as u32, y0 as u32), color);
            assert_eq!(*img.get_pixel(x1 as u32, y1 as u32), color);
            if c.inlier {
                yellow_expected += pts.len();
            } else {
                red_expected += pts.len();
            }
        }
        let yellow = img.pixels().filter(|p| **p == COLOR_INLIER).count();
        let red = img.pixels().filter(|p| **p == COLOR_OUTLIER).count();
        assert_eq!(yellow, yellow_expected);
        assert_eq!(red, red_expected);
    }
}
