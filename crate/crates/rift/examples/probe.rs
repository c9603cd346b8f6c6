// Development probe: variant histograms and stage timing at full scale.
use std::time::Instant;

use rift::imgproc::{warp_affine, AffineTransform};
use rift::pipeline::{extract_features, match_features, RiftConfig, Role};
use rift::synthetic::scene;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let size: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(512);
    let angle_deg: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30.0);
    let caps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2500);

    let img = scene::<f32>(size, size, 5);
    let mut cfg = RiftConfig::<f32>::default();
    cfg.detect.max_corners = caps;
    cfg.detect.max_edges = caps;

    let c = (size as f32 - 1.0) / 2.0;
    let rot = AffineTransform::rotation_about(c, c, (angle_deg as f32).to_radians());
    let rotated = warp_affine(&img, &rot, (size, size)).unwrap();

    let t0 = Instant::now();
    let rf = extract_features(&img, &cfg, Role::Reference).unwrap();
    let t1 = Instant::now();
    let tf = extract_features(&rotated, &cfg, Role::Target).unwrap();
    let t2 = Instant::now();
    let result = match_features(&rf, &tf, &cfg).unwrap();
    let t3 = Instant::now();

    println!(
        "size {size} angle {angle_deg} ref_kp {} tgt_kp {}",
        rf.keypoints.len(),
        tf.keypoints.len()
    );
    println!(
        "extract_ref {:.2}s extract_tgt {:.2}s match {:.2}s total {:.2}s",
        (t1 - t0).as_secs_f64(),
        (t2 - t1).as_secs_f64(),
        (t3 - t2).as_secs_f64(),
        (t3 - t0).as_secs_f64()
    );
    let mut variant_hist = [0usize; 6];
    for c in result.correspondences.iter().filter(|c| c.inlier) {
        variant_hist[c.variant] += 1;
    }
    println!(
        "candidates {} inliers {} success {} variants {:?}",
        result.correspondences.len(),
        result.inlier_count,
        result.is_success(),
        variant_hist
    );
    if let Some(t) = result.affine {
        let mut worst = 0.0f32;
        let probe = [(c, c), (c - 80.0, c + 40.0), (c + 60.0, c - 90.0)];
        for &(x, y) in &probe {
            let (gx, gy) = rot.apply(x, y);
            let (px, py) = t.apply(x, y);
            worst = worst.max(((gx - px).powi(2) + (gy - py).powi(2)).sqrt());
        }
        println!("worst probe transfer error {worst:.3}");
    }
}
