use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{average_precision, greedy_match, iou, oks, EvalError, OksParams, PrCurve, PredKeypoint};
use crate::dataset::{BBox, DatasetManifest, ShootAnnotation, MAX_KEYPOINTS};

/// One detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<PredKeypoint>>,
}

impl Detection {
    pub fn validate(&self) -> Result<(), String> {
        if !self.score.is_finite() {
            return Err(format!("score {} is not finite", self.score));
        }
        if let Some(k) = &self.keypoints {
            if k.len() > MAX_KEYPOINTS {
                return Err(format!("{} keypoints, at most {MAX_KEYPOINTS} allowed", k.len()));
            }
            if k.iter().flatten().any(|v| !v.is_finite()) {
                return Err("non-finite keypoint coordinate".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[serde(rename = "bbox")]
    BBox,
    Keypoint,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::BBox => "bbox",
            Task::Keypoint => "keypoint",
        })
    }
}

impl FromStr for Task {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bbox" => Ok(Task::BBox),
            "keypoint" | "keypoints" => Ok(Task::Keypoint),
            other => Err(EvalError::Params(format!("unknown task `{other}` (bbox|keypoint)"))),
        }
    }
}

/// `0.50, 0.55, ..., 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n_images: usize,
    pub n_ground_truth: usize,
    pub n_detections: usize,
    pub per_threshold: Vec<ThresholdAp>,
    pub map: f64,
    pub map50: f64,
    /// Ranked curve at threshold 0.50.
    pub pr_curve_50: PrCurve,
}

/// GT instances that take part in `task`. Keypoint evaluation skips shoots
/// with no visible node, since OKS is undefined for them.
fn eligible(anns: &[ShootAnnotation], task: Task) -> Vec<&ShootAnnotation> {
    anns.iter()
        .filter(|a| task == Task::BBox || a.visible_count() > 0)
        .collect()
}

fn similarity(det: &Detection, gt: &ShootAnnotation, task: Task, p: &OksParams) -> Result<f64, EvalError> {
    match task {
        Task::BBox => Ok(iou(&det.bbox, &gt.bbox)),
        Task::Keypoint => oks(det.keypoints.as_deref().unwrap_or(&[]), gt, p),
    }
}

/// Pooled AP over every image of `gt`, at each threshold.
///
/// Detections are ranked globally by score (descending), then image id,
/// then input position. Matching is greedy within each image.
pub fn map_report(
    dets: &[Detection],
    gt: &DatasetManifest,
    task: Task,
    thresholds: &[f64],
    params: &OksParams,
) -> Result<EvalReport, EvalError> {
    params.validate()?;
    if thresholds.is_empty() {
        return Err(EvalError::Params("no thresholds".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(EvalError::Params(format!("threshold {t} outside (0, 1]")));
    }
    let mut gts: BTreeMap<&str, Vec<&ShootAnnotation>> = BTreeMap::new();
    for r in &gt.records {
        gts.insert(r.id.as_str(), eligible(&r.annotations, task));
    }
    let n_gt: usize = gts.values().map(Vec::len).sum();
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    for (i, d) in dets.iter().enumerate() {
        d.validate()
            .map_err(|message| EvalError::BadDetection { index: i, message })?;
        if !gts.contains_key(d.image_id.as_str()) {
            return Err(EvalError::UnknownImage(d.image_id.clone()));
        }
    }

    let mut ranking: Vec<usize> = (0..dets.len()).collect();
    ranking.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then_with(|| dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });
    let mut rank_of = vec![0; dets.len()];
    for (r, &d) in ranking.iter().enumerate() {
        rank_of[d] = r;
    }

    // per image: detection indices in rank order and their similarity rows
    let mut per_image: BTreeMap<&str, (Vec<usize>, Vec<Vec<f64>>)> = BTreeMap::new();
    for &d in &ranking {
        let image_gts = &gts[dets[d].image_id.as_str()];
        let row = image_gts
            .iter()
            .map(|g| similarity(&dets[d], g, task, params))
            .collect::<Result<Vec<_>, _>>()?;
        let entry = per_image.entry(dets[d].image_id.as_str()).or_default();
        entry.0.push(d);
        entry.1.push(row);
    }

    let curve_at = |thr: f64| -> Result<PrCurve, EvalError> {
        let mut tp = vec![false; dets.len()];
        for (image, (members, sims)) in &per_image {
            let order: Vec<usize> = (0..members.len()).collect();
            let (flags, _) = greedy_match(&order, sims, gts[image].len(), thr);
            for (k, &d) in members.iter().enumerate() {
                tp[rank_of[d]] = flags[k];
            }
        }
        average_precision(&tp, n_gt)
    };

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    let mut pr_curve_50 = None;
    for &t in thresholds {
        let c = curve_at(t)?;
        per_threshold.push(ThresholdAp { threshold: t, ap: c.ap });
        if t == 0.5 {
            pr_curve_50 = Some(c);
        }
    }
    let pr_curve_50 = match pr_curve_50 {
        Some(c) => c,
        None => curve_at(0.5)?,
    };
    let map = per_threshold.iter().map(|t| t.ap).sum::<f64>() / per_threshold.len() as f64;
    Ok(EvalReport {
        task,
        n_images: gt.records.len(),
        n_ground_truth: n_gt,
        n_detections: dets.len(),
        map,
        map50: pr_curve_50.ap,
        per_threshold,
        pr_curve_50,
    })
}
