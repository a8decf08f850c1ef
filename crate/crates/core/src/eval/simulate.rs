use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Detection;
use crate::dataset::{BBox, DatasetManifest};

/// A fake detector that perturbs ground truth. Deterministic per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSim {
    /// Max shift of each box edge, pixels.
    pub box_jitter: f64,
    /// Max shift of each keypoint coordinate, pixels.
    pub keypoint_jitter: f64,
    /// Probability that a GT instance is not detected.
    pub miss_rate: f64,
    /// Spurious boxes added per image.
    pub false_positives: usize,
}

impl Default for DetectorSim {
    fn default() -> Self {
        Self {
            box_jitter: 4.0,
            keypoint_jitter: 3.0,
            miss_rate: 0.1,
            false_positives: 1,
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    if a > 0.0 {
        rng.random_range(-a..=a)
    } else {
        0.0
    }
}

pub fn simulate_detections(gt: &DatasetManifest, sim: &DetectorSim, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in &gt.records {
        for a in &r.annotations {
            if rng.random_bool(sim.miss_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let b = a.bbox;
            let x0 = (b.x + jitter(&mut rng, sim.box_jitter)).max(0.0);
            let y0 = (b.y + jitter(&mut rng, sim.box_jitter)).max(0.0);
            let x1 = (b.right() + jitter(&mut rng, sim.box_jitter))
                .min(r.width as f64)
                .max(x0 + 1.0);
            let y1 = (b.bottom() + jitter(&mut rng, sim.box_jitter))
                .min(r.height as f64)
                .max(y0 + 1.0);
            let keypoints = (1..=a.keypoints.iter().map(|k| k.index).max().unwrap_or(0))
                .map(|i| match a.keypoint(i) {
                    Some(k) => [
                        k.x + jitter(&mut rng, sim.keypoint_jitter),
                        k.y + jitter(&mut rng, sim.keypoint_jitter),
                        2.0,
                    ],
                    None => [0.0, 0.0, 0.0],
                })
                .collect();
            out.push(Detection {
                image_id: r.id.clone(),
                bbox: BBox::new(x0, y0, x1 - x0, y1 - y0),
                score: rng.random_range(0.5..1.0),
                keypoints: Some(keypoints),
            });
        }
        for _ in 0..sim.false_positives {
            let (w, h) = (r.width as f64, r.height as f64);
            let bw = rng.random_range(8.0..(w / 4.0).max(9.0));
            let bh = rng.random_range(8.0..(h / 2.0).max(9.0));
            out.push(Detection {
                image_id: r.id.clone(),
                bbox: BBox::new(
                    rng.random_range(0.0..(w - bw).max(1.0)),
                    rng.random_range(0.0..(h - bh).max(1.0)),
                    bw,
                    bh,
                ),
                score: rng.random_range(0.0..0.6),
                keypoints: None,
            });
        }
    }
    out
}
