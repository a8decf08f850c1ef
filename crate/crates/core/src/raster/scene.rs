use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RasterImage;
use crate::dataset::ShootAnnotation;

/// Lighting of a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneLighting {
    Day,
    Night,
}

/// Paints a stand-in photograph for an annotation set: a noisy vertical
/// gradient with each shoot drawn as a thick stem through its visible
/// nodes and a bright blob at each node. Used for hermetic fixtures only.
pub fn synth_scene(anns: &[ShootAnnotation], w: u32, h: u32, lighting: SceneLighting, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sky, ground, stem, node) = match lighting {
        SceneLighting::Day => ([150u8, 185, 220], [90u8, 120, 70], [70u8, 60, 40], [200u8, 230, 120]),
        SceneLighting::Night => ([10, 12, 25], [25, 30, 20], [120, 110, 90], [230, 230, 200]),
    };
    let mut img = RasterImage::filled_rgb(w, h, [0, 0, 0]);
    for y in 0..h {
        let t = y as f64 / h.max(1) as f64;
        for x in 0..w {
            let mut c = [0u8; 3];
            for k in 0..3 {
                let base = sky[k] as f64 * (1.0 - t) + ground[k] as f64 * t;
                c[k] = (base + rng.random_range(-6.0..=6.0)).clamp(0.0, 255.0) as u8;
            }
            img.put(x, y, c);
        }
    }
    for a in anns {
        let nodes: Vec<(f64, f64)> = a.keypoints.iter().filter(|k| k.visible).map(|k| (k.x, k.y)).collect();
        for seg in nodes.windows(2) {
            let (x0, y0) = seg[0];
            let (x1, y1) = seg[1];
            let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                disc(&mut img, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, 2.0, stem);
            }
        }
        for &(x, y) in &nodes {
            disc(&mut img, x, y, 3.0, node);
        }
    }
    img
}

fn disc(img: &mut RasterImage, cx: f64, cy: f64, r: f64, color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
    let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                img.put(x as u32, y as u32, color);
            }
        }
    }
}
