//! Deterministic synthetic scenes for tests and demos.
//!
//! Real multi-modal benchmark imagery cannot ship with the repository, so
//! tests run on procedurally generated scenes: multi-octave value noise
//! overlaid with rectangles, disks, and bars at arbitrary angles, lightly
//! smoothed. The result has corners and edges at many orientations and
//! scales, which is what the detector and descriptor need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imgproc::Raster;
use crate::num::{cast, Scalar};

fn value_noise(w: usize, h: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let gy = y / cell;
        let fy = (y % cell) as f64 / cell as f64;
        for x in 0..w {
            let gx = x / cell;
            let fx = (x % cell) as f64 / cell as f64;
            let v00 = lattice[gy * gw + gx];
            let v10 = lattice[gy * gw + gx + 1];
            let v01 = lattice[(gy + 1) * gw + gx];
            let v11 = lattice[(gy + 1) * gw + gx + 1];
            out[y * w + x] = v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy;
        }
    }
    out
}

fn fill_disk(buf: &mut [f64], w: usize, h: usize, cx: f64, cy: f64, r: f64, v: f64) {
    let x0 = ((cx - r).floor().max(0.0)) as usize;
    let x1 = ((cx + r).ceil().min(w as f64 - 1.0)) as usize;
    let y0 = ((cy - r).floor().max(0.0)) as usize;
    let y1 = ((cy + r).ceil().min(h as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                buf[y * w + x] = v;
            }
        }
    }
}

/// Generates a `width x height` scene in `[0, 1]`, fully determined by the
/// seed.
pub fn scene<T: Scalar>(width: usize, height: usize, seed: u64) -> Raster<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width, height);
    let mut buf = vec![0.0f64; w * h];

    // layered value noise background
    let mut amp = 0.55;
    for cell in [48, 24, 12] {
        let layer = value_noise(w, h, cell.min(w / 2).max(2), &mut rng);
        for (dst, src) in buf.iter_mut().zip(&layer) {
            *dst += amp * src;
        }
        amp *= 0.5;
    }

    // rectangles, axis-aligned
    let n_rects = 8 + (w * h) / 16384;
    for _ in 0..n_rects {
        let rw = rng.gen_range(w / 20..w / 4).max(4);
        let rh = rng.gen_range(h / 20..h / 4).max(4);
        let x0 = rng.gen_range(0..w - rw);
        let y0 = rng.gen_range(0..h - rh);
        let v = rng.gen_range(0.0..1.0);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                buf[y * w + x] = v;
            }
        }
    }

    // disks
    for _ in 0..n_rects / 2 {
        let r = rng.gen_range(4.0..w as f64 / 10.0);
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let v = rng.gen_range(0.0..1.0);
        fill_disk(&mut buf, w, h, cx, cy, r, v);
    }

    // thick bars at arbitrary angles
    for _ in 0..n_rects {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let len = rng.gen_range(w as f64 / 10.0..w as f64 / 3.0);
        let thick = rng.gen_range(1.2..3.0);
        let v = rng.gen_range(0.0..1.0);
        let (s, c) = angle.sin_cos();
        let steps = len as usize;
        for k in 0..steps {
            let t = k as f64 - len / 2.0;
            fill_disk(&mut buf, w, h, cx + t * c, cy + t * s, thick, v);
        }
    }

    // light 3x3 binomial smoothing to soften pixel stairs
    let mut smooth = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let xx = x as i64 + dx;
                    let yy = y as i64 + dy;
                    if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                        continue;
                    }
                    let wgt = (4 >> (dx.abs() + dy.abs())) as f64;
                    acc += wgt * buf[yy as usize * w + xx as usize];
                    wsum += wgt;
                }
            }
            smooth[y * w + x] = acc / wsum;
        }
    }

    let lo = smooth.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(1e-12);
    let data: Vec<T> = smooth.iter().map(|&v| cast((v - lo) / range)).collect();
    Raster::from_vec(w, h, data).expect("generated scene is finite")
}
