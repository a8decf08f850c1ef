//! Detection evaluation: IoU and OKS similarity, greedy matching,
//! precision/recall and 101-point interpolated AP, pooled into mAP
//! (thresholds 0.50:0.05:0.95) and mAP50 for the box and keypoint tasks.

mod io;
mod matching;
mod report;
mod similarity;
mod simulate;

pub use io::{
    from_coco_results, load_coco_results, load_detections_jsonl, parse_detections_jsonl, write_detections_jsonl,
    write_report_csv, CocoResult,
};
pub use matching::{average_precision, greedy_match, PrCurve};
pub use report::{default_thresholds, map_report, Detection, EvalReport, Task, ThresholdAp};
pub use similarity::{iou, oks, OksParams, PredKeypoint};
pub use simulate::{simulate_detections, DetectorSim};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("no ground-truth instances to evaluate against")]
    NoGroundTruth,
    #[error("detection refers to unknown image `{0}`")]
    UnknownImage(String),
    #[error("detection {index}: {message}")]
    BadDetection { index: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
