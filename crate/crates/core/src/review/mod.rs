//! Human curation of generated images: a review queue, latest-wins
//! verdicts backed by an append-only JSON-lines log, curated export, and
//! the HTTP service in [`server`].

pub mod server;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, DomainTag, ImageRecord};
use crate::selection::{BatchGate, GateDecision};

pub use server::{review_router, QueueItemView, ReviewState, VerdictAck};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("image `{0}` is not in the review queue")]
    UnknownImage(String),
    #[error("duplicate queue item `{0}`")]
    DuplicateItem(String),
    #[error("items without a verdict: {}", .0.join(", "))]
    Unreviewed(Vec<String>),
    #[error("unknown export filter `{0}` (accepted|rejected|all)")]
    BadFilter(String),
    #[error("verdict log line {line}: {message}")]
    BadLog { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewReason {
    AnnotationMismatch,
    UnnaturalBackground,
    UnrealisticObject,
    Other,
}

/// Verdict as submitted by a reviewer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictInput {
    pub image_id: String,
    pub accepted: bool,
    #[serde(default)]
    pub reasons: BTreeSet<ReviewReason>,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub image_id: String,
    pub accepted: bool,
    pub reasons: BTreeSet<ReviewReason>,
    pub note: String,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

impl Verdict {
    pub fn stamp(input: VerdictInput, timestamp: DateTime<Utc>) -> Self {
        Self {
            image_id: input.image_id,
            accepted: input.accepted,
            reasons: input.reasons,
            note: input.note,
            reviewer: input.reviewer,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub record: ImageRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateDecision>,
}

/// Published set of generated images awaiting review. Items do not change
/// after publication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueue {
    pub run_id: String,
    #[serde(default)]
    pub domains: Vec<DomainTag>,
    pub items: Vec<QueueItem>,
}

impl ReviewQueue {
    /// Queue of every record in `m`, with gate decisions attached by id
    /// when available.
    pub fn from_manifest(run_id: impl Into<String>, m: &DatasetManifest, gate: Option<&BatchGate>) -> Self {
        let decisions: BTreeMap<&str, &GateDecision> = gate
            .map(|g| g.decisions.iter().map(|d| (d.image_id.as_str(), d)).collect())
            .unwrap_or_default();
        Self {
            run_id: run_id.into(),
            domains: m.domains.clone(),
            items: m
                .records
                .iter()
                .map(|r| QueueItem {
                    record: r.clone(),
                    gate: decisions.get(r.id.as_str()).map(|d| (*d).clone()),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ReviewError> {
        let mut seen = BTreeSet::new();
        for it in &self.items {
            if !seen.insert(it.record.id.as_str()) {
                return Err(ReviewError::DuplicateItem(it.record.id.clone()));
            }
        }
        Ok(())
    }

    pub fn item(&self, id: &str) -> Option<&QueueItem> {
        self.items.iter().find(|i| i.record.id == id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReviewError> {
        let path = path.as_ref();
        let q: ReviewQueue = serde_json::from_str(&std::fs::read_to_string(path).map_err(io_err(path))?)?;
        q.validate()?;
        Ok(q)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ReviewError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }
}

/// Active verdict per image (latest wins) plus the full history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictState {
    active: BTreeMap<String, Verdict>,
    history: Vec<Verdict>,
}

impl VerdictState {
    pub fn apply(&mut self, queue: &ReviewQueue, v: Verdict) -> Result<(), ReviewError> {
        if queue.item(&v.image_id).is_none() {
            return Err(ReviewError::UnknownImage(v.image_id));
        }
        self.active.insert(v.image_id.clone(), v.clone());
        self.history.push(v);
        Ok(())
    }

    pub fn active(&self, id: &str) -> Option<&Verdict> {
        self.active.get(id)
    }

    pub fn active_verdicts(&self) -> &BTreeMap<String, Verdict> {
        &self.active
    }

    pub fn history(&self) -> &[Verdict] {
        &self.history
    }

    pub fn history_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Verdict> + 'a {
        self.history.iter().filter(move |v| v.image_id == id)
    }

    /// State obtained by applying log lines in order.
    pub fn replay(queue: &ReviewQueue, log: impl BufRead) -> Result<Self, ReviewError> {
        let mut s = Self::default();
        for (n, line) in log.lines().enumerate() {
            let line = line.map_err(io_err(Path::new("<verdict log>")))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Verdict = serde_json::from_str(&line).map_err(|e| ReviewError::BadLog {
                line: n + 1,
                message: e.to_string(),
            })?;
            s.apply(queue, v)?;
        }
        Ok(s)
    }
}

/// Append-only JSON-lines file of verdicts. Every append is flushed.
pub struct VerdictLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl VerdictLog {
    /// Opens (creating if needed) and replays an existing log.
    pub fn open(path: impl Into<PathBuf>, queue: &ReviewQueue) -> Result<(Self, VerdictState), ReviewError> {
        let path = path.into();
        let state = match File::open(&path) {
            Ok(f) => VerdictState::replay(queue, BufReader::new(f))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => VerdictState::default(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok((
            Self {
                path,
                out: BufWriter::new(file),
            },
            state,
        ))
    }

    pub fn append(&mut self, v: &Verdict) -> Result<(), ReviewError> {
        serde_json::to_writer(&mut self.out, v)?;
        self.out.write_all(b"\n").map_err(io_err(&self.path))?;
        self.flush()
    }

    pub fn flush(&mut self) -> Result<(), ReviewError> {
        self.out.flush().map_err(io_err(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for VerdictLog {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFilter {
    Accepted,
    Rejected,
    All,
}

impl FromStr for ExportFilter {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accepted" => Ok(ExportFilter::Accepted),
            "rejected" => Ok(ExportFilter::Rejected),
            "all" => Ok(ExportFilter::All),
            other => Err(ReviewError::BadFilter(other.to_string())),
        }
    }
}

/// Manifest of the queue records matching `filter`, in queue order and
/// with annotations untouched. `accepted` and `rejected` require every
/// item to have a verdict.
pub fn export_curated(
    queue: &ReviewQueue,
    state: &VerdictState,
    filter: ExportFilter,
) -> Result<DatasetManifest, ReviewError> {
    if filter != ExportFilter::All {
        let missing: Vec<String> = queue
            .items
            .iter()
            .filter(|i| state.active(&i.record.id).is_none())
            .map(|i| i.record.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(ReviewError::Unreviewed(missing));
        }
    }
    let records = queue
        .items
        .iter()
        .filter(|i| match filter {
            ExportFilter::All => true,
            ExportFilter::Accepted => state.active(&i.record.id).is_some_and(|v| v.accepted),
            ExportFilter::Rejected => state.active(&i.record.id).is_some_and(|v| !v.accepted),
        })
        .map(|i| i.record.clone())
        .collect();
    Ok(DatasetManifest::new(queue.domains.clone(), records))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::{BBox, Keypoint, Provenance, ShootAnnotation, Split};

    pub(crate) fn queue(n: usize) -> ReviewQueue {
        ReviewQueue {
            run_id: "run-1".into(),
            domains: vec![DomainTag::new("day", "day")],
            items: (0..n)
                .map(|i| QueueItem {
                    record: ImageRecord {
                        id: format!("gen-{i}"),
                        path: format!("gen-{i}.png"),
                        width: 512,
                        height: 512,
                        domain: "day".into(),
                        split: Split::Pool,
                        provenance: Provenance::Generated,
                        annotations: vec![ShootAnnotation::new(
                            BBox::new(10.0 + i as f64, 10.0, 50.0, 200.0),
                            vec![Keypoint::new(1, 30.0, 20.0, true)],
                        )],
                    },
                    gate: None,
                })
                .collect(),
        }
    }

    fn verdict(id: &str, accepted: bool, t: i64) -> Verdict {
        Verdict {
            image_id: id.into(),
            accepted,
            reasons: if accepted {
                BTreeSet::new()
            } else {
                [ReviewReason::AnnotationMismatch].into()
            },
            note: String::new(),
            reviewer: "r".into(),
            timestamp: DateTime::from_timestamp(t, 0).unwrap(),
        }
    }

    #[test]
    fn latest_wins_with_history() {
        let q = queue(2);
        let mut s = VerdictState::default();
        s.apply(&q, verdict("gen-0", false, 1)).unwrap();
        s.apply(&q, verdict("gen-0", true, 2)).unwrap();
        assert!(s.active("gen-0").unwrap().accepted);
        assert_eq!(s.history_of("gen-0").count(), 2);
        assert!(matches!(
            s.apply(&q, verdict("nope", true, 3)),
            Err(ReviewError::UnknownImage(_))
        ));
    }

    #[test]
    fn export_filters_partition() {
        let q = queue(3);
        let mut s = VerdictState::default();
        assert!(matches!(
            export_curated(&q, &s, ExportFilter::Accepted),
            Err(ReviewError::Unreviewed(ids)) if ids.len() == 3
        ));
        assert_eq!(export_curated(&q, &s, ExportFilter::All).unwrap().records.len(), 3);
        s.apply(&q, verdict("gen-0", true, 1)).unwrap();
        s.apply(&q, verdict("gen-1", true, 2)).unwrap();
        let err = export_curated(&q, &s, ExportFilter::Accepted).unwrap_err().to_string();
        assert!(err.contains("gen-2"), "{err}");
        s.apply(&q, verdict("gen-2", false, 3)).unwrap();
        let acc = export_curated(&q, &s, ExportFilter::Accepted).unwrap();
        let rej = export_curated(&q, &s, ExportFilter::Rejected).unwrap();
        assert_eq!(acc.records.len(), 2);
        assert_eq!(rej.records.len(), 1);
        assert_eq!(acc.records[0], q.items[0].record);
    }

    #[test]
    fn log_replay_reconstructs_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        let q = queue(3);
        let (mut log, mut live) = VerdictLog::open(&path, &q).unwrap();
        for v in [
            verdict("gen-0", true, 1),
            verdict("gen-1", false, 2),
            verdict("gen-0", false, 3),
        ] {
            log.append(&v).unwrap();
            live.apply(&q, v).unwrap();
        }
        drop(log);
        let (_, replayed) = VerdictLog::open(&path, &q).unwrap();
        assert_eq!(replayed, live);
        assert_eq!(replayed.history().len(), 3);
    }

    #[test]
    fn queue_checks() {
        let mut q = queue(2);
        q.items[1].record.id = "gen-0".into();
        assert!(matches!(q.validate(), Err(ReviewError::DuplicateItem(_))));
        assert!("maybe".parse::<ExportFilter>().is_err());
    }
}
