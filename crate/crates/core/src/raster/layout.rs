use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RasterError;
use crate::dataset::{BBox, Keypoint, ShootAnnotation, MAX_KEYPOINTS};

/// Parameters of the synthetic shoot layout generator.
///
/// Shoots are placed as near-vertical chains of nodes, spread evenly across
/// the canvas with horizontal jitter. Node spacing is drawn per gap from
/// `internode_gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub canvas_w: u32,
    pub canvas_h: u32,
    /// Inclusive range of shoots per image.
    pub shoots: [usize; 2],
    /// Inclusive range of nodes per shoot.
    pub nodes: [usize; 2],
    /// Inclusive range of vertical distance between consecutive nodes.
    pub internode_gap: [f64; 2],
    /// Maximum horizontal offset of a node from its shoot axis.
    pub lateral_jitter: f64,
    /// Maximum horizontal offset of a shoot axis from its even slot.
    pub shoot_jitter: f64,
    /// Maximum vertical offset of a shoot from the canvas middle.
    pub vertical_jitter: f64,
    /// Space between the outermost nodes and the box edge.
    pub bbox_padding: f64,
    /// Largest IoU tolerated between two generated boxes.
    pub max_overlap: f64,
    /// Resampling attempts before the parameters are declared infeasible.
    pub max_attempts: usize,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            canvas_w: 512,
            canvas_h: 512,
            shoots: [2, 5],
            nodes: [4, 10],
            internode_gap: [18.0, 40.0],
            lateral_jitter: 6.0,
            shoot_jitter: 20.0,
            vertical_jitter: 60.0,
            bbox_padding: 8.0,
            max_overlap: 0.3,
            max_attempts: 64,
        }
    }
}

impl LayoutParams {
    fn check(&self) -> Result<(), RasterError> {
        let bad = |m: String| Err(RasterError::Layout(m));
        if self.canvas_w == 0 || self.canvas_h == 0 {
            return bad("canvas must be non-empty".into());
        }
        if self.shoots[0] == 0 || self.shoots[0] > self.shoots[1] {
            return bad(format!("invalid shoot count range {:?}", self.shoots));
        }
        if self.nodes[0] == 0 || self.nodes[0] > self.nodes[1] || self.nodes[1] > MAX_KEYPOINTS {
            return bad(format!("invalid node count range {:?}", self.nodes));
        }
        if !(self.internode_gap[0] >= 1.0 && self.internode_gap[0] <= self.internode_gap[1]) {
            return bad(format!(
                "internode gap range {:?} must start at 1 px or more",
                self.internode_gap
            ));
        }
        let jitters = [
            self.lateral_jitter,
            self.shoot_jitter,
            self.vertical_jitter,
            self.bbox_padding,
        ];
        if jitters.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("jitter and padding must be finite and non-negative".into());
        }
        let shortest = (self.nodes[0] - 1) as f64 * self.internode_gap[0] + 2.0 * self.bbox_padding + 1.0;
        if shortest > f64::from(self.canvas_h) {
            return bad(format!(
                "shortest shoot ({shortest} px) does not fit canvas height {}",
                self.canvas_h
            ));
        }
        let narrowest = self.shoots[0] as f64 * (2.0 * self.bbox_padding + 1.0);
        if narrowest > f64::from(self.canvas_w) * (1.0 + self.max_overlap) {
            return bad(format!(
                "{} shoots do not fit canvas width {}",
                self.shoots[0], self.canvas_w
            ));
        }
        Ok(())
    }
}

/// Generates a random but valid annotation layout. Same params and seed give
/// the same layout. Coordinates are whole pixels.
pub fn synth_layout(params: &LayoutParams, seed: u64) -> Result<Vec<ShootAnnotation>, RasterError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_attempts.max(1) {
        if let Some(layout) = attempt(params, &mut rng) {
            return Ok(layout);
        }
    }
    Err(RasterError::Layout(format!(
        "no layout within overlap limit {} after {} attempts",
        params.max_overlap, params.max_attempts
    )))
}

fn attempt(p: &LayoutParams, rng: &mut ChaCha8Rng) -> Option<Vec<ShootAnnotation>> {
    let (w, h) = (f64::from(p.canvas_w), f64::from(p.canvas_h));
    let n = rng.random_range(p.shoots[0]..=p.shoots[1]);
    let slot = w / (n as f64 + 1.0);
    let mut out: Vec<ShootAnnotation> = Vec::with_capacity(n);
    for i in 0..n {
        let axis = slot * (i as f64 + 1.0) + symmetric(rng, p.shoot_jitter);
        let m = rng.random_range(p.nodes[0]..=p.nodes[1]);
        let gaps: Vec<f64> = (1..m)
            .map(|_| rng.random_range(p.internode_gap[0]..=p.internode_gap[1]))
            .collect();
        let length: f64 = gaps.iter().sum();
        let lo = p.bbox_padding;
        let hi = h - 1.0 - p.bbox_padding - length;
        if hi < lo {
            return None;
        }
        let top = ((h - length) / 2.0 + symmetric(rng, p.vertical_jitter)).clamp(lo, hi);

        let mut keypoints = Vec::with_capacity(m);
        let mut y = top;
        for j in 0..m {
            if j > 0 {
                y += gaps[j - 1];
            }
            let x = (axis + symmetric(rng, p.lateral_jitter)).round().clamp(0.0, w - 1.0);
            keypoints.push(Keypoint::new(j as u8 + 1, x, y.round(), true));
        }
        let min_x = keypoints.iter().map(|k| k.x).fold(f64::INFINITY, f64::min);
        let max_x = keypoints.iter().map(|k| k.x).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - p.bbox_padding).floor().max(0.0);
        let x1 = (max_x + p.bbox_padding + 1.0).ceil().min(w);
        let y0 = (keypoints[0].y - p.bbox_padding).floor().max(0.0);
        let y1 = (keypoints[m - 1].y + p.bbox_padding + 1.0).ceil().min(h);
        let bbox = BBox::new(x0, y0, x1 - x0, y1 - y0);
        if out.iter().any(|o| crate::eval::iou(&o.bbox, &bbox) > p.max_overlap) {
            return None;
        }
        out.push(ShootAnnotation::new(bbox, keypoints));
    }
    Some(out)
}

fn symmetric(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        rng.random_range(-amplitude..=amplitude)
    } else {
        0.0
    }
}
