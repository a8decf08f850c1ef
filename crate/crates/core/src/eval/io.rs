use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detection, EvalError, EvalReport};
use crate::dataset::{BBox, CocoDataset};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One detection per line; blank lines are skipped.
pub fn parse_detections_jsonl(text: &str) -> Result<Vec<Detection>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(line).map_err(|e| EvalError::BadDetection {
            index: n + 1,
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(d);
    }
    Ok(out)
}

pub fn load_detections_jsonl(path: impl AsRef<Path>) -> Result<Vec<Detection>, EvalError> {
    let path = path.as_ref();
    parse_detections_jsonl(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn write_detections_jsonl(mut w: impl Write, dets: &[Detection]) -> Result<(), EvalError> {
    for d in dets {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(io_err(Path::new("<detections>")))?;
    }
    Ok(())
}

/// Entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    #[serde(default = "one")]
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keypoints: Vec<f64>,
}

fn one() -> u64 {
    1
}

/// Converts COCO results to detections, resolving numeric image ids
/// through the images table (the stored record id, else the file name).
pub fn from_coco_results(results: &[CocoResult], coco: &CocoDataset) -> Result<Vec<Detection>, EvalError> {
    results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let image = coco
                .images
                .iter()
                .find(|im| im.id == r.image_id)
                .ok_or_else(|| EvalError::UnknownImage(r.image_id.to_string()))?;
            if r.keypoints.len() % 3 != 0 {
                return Err(EvalError::BadDetection {
                    index: i,
                    message: format!("{} keypoint values, expected triples", r.keypoints.len()),
                });
            }
            let keypoints =
                (!r.keypoints.is_empty()).then(|| r.keypoints.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
            let [x, y, w, h] = r.bbox;
            Ok(Detection {
                image_id: image.record_id.clone().unwrap_or_else(|| image.file_name.clone()),
                bbox: BBox::new(x, y, w, h),
                score: r.score,
                keypoints,
            })
        })
        .collect()
}

pub fn load_coco_results(path: impl AsRef<Path>, coco: &CocoDataset) -> Result<Vec<Detection>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let results: Vec<CocoResult> = serde_json::from_str(&text)?;
    from_coco_results(&results, coco)
}

/// Summary table: one row per threshold, then `map` and `map50`.
pub fn write_report_csv(w: impl Write, reports: &[EvalReport]) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["task", "metric", "threshold", "value"])?;
    for r in reports {
        let task = r.task.to_string();
        for t in &r.per_threshold {
            out.write_record([task.as_str(), "ap", &format!("{:.2}", t.threshold), &t.ap.to_string()])?;
        }
        out.write_record([task.as_str(), "map", "", &r.map.to_string()])?;
        out.write_record([task.as_str(), "map50", "0.50", &r.map50.to_string()])?;
    }
    out.flush().map_err(io_err(Path::new("<csv>")))?;
    Ok(())
}
