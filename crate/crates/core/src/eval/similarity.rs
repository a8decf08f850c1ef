use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{BBox, ShootAnnotation, MAX_KEYPOINTS};

/// Intersection over union. Boxes are half-open `[x, x+w) x [y, y+h)`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OksParams {
    /// One falloff constant per node, `k_per_class[i]` for node `i + 1`.
    pub k_per_class: Vec<f64>,
}

impl Default for OksParams {
    fn default() -> Self {
        Self {
            k_per_class: vec![0.1; MAX_KEYPOINTS],
        }
    }
}

impl OksParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k_per_class.len() != MAX_KEYPOINTS {
            return Err(EvalError::Params(format!(
                "expected {MAX_KEYPOINTS} k constants, got {}",
                self.k_per_class.len()
            )));
        }
        if let Some(k) = self.k_per_class.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(EvalError::Params(format!("k constants must be positive, got {k}")));
        }
        Ok(())
    }
}

/// Predicted keypoint `[x, y, v]`; position `i` in the list is node `i + 1`.
/// The predicted visibility is carried but not used for scoring.
pub type PredKeypoint = [f64; 3];

/// Object keypoint similarity against one ground-truth shoot.
///
/// Only visible GT nodes count. The scale is `s = sqrt(area of the GT
/// box)`. A visible GT node without a prediction contributes zero.
pub fn oks(pred: &[PredKeypoint], gt: &ShootAnnotation, p: &OksParams) -> Result<f64, EvalError> {
    let s2 = gt.bbox.area();
    if !(s2 > 0.0) {
        return Err(EvalError::Degenerate("ground-truth box has zero area".into()));
    }
    let mut num = 0.0;
    let mut den = 0usize;
    for kp in gt.keypoints.iter().filter(|k| k.visible) {
        den += 1;
        let slot = kp.index as usize - 1;
        if let Some(&[x, y, _]) = pred.get(slot) {
            let k = p.k_per_class[slot];
            let d2 = (x - kp.x).powi(2) + (y - kp.y).powi(2);
            num += (-d2 / (2.0 * s2 * k * k)).exp();
        }
    }
    if den == 0 {
        return Err(EvalError::Degenerate("ground truth has no visible keypoints".into()));
    }
    Ok(num / den as f64)
}
