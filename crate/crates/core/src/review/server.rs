//! `review-serve` HTTP API.
//!
//! | route | response |
//! |---|---|
//! | `GET /queue` | JSON list of queue items with gate metadata and active verdict |
//! | `GET /image/{id}` | the generated PNG |
//! | `GET /overlay/{id}` | the PNG with its annotations drawn on top |
//! | `POST /verdict` | stores `{image_id, accepted, reasons[], note, reviewer}` |
//! | `GET /export?filter=accepted\|rejected\|all` | curated manifest |
//!
//! There is no authentication; bind to localhost.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::{export_curated, ExportFilter, ReviewError, ReviewQueue, Verdict, VerdictInput, VerdictLog, VerdictState};
use crate::dataset::ImageRecord;
use crate::raster::{draw_annotations, PlotStyle, RasterImage};
use crate::selection::GateDecision;

struct Inner {
    verdicts: VerdictState,
    log: Option<VerdictLog>,
}

/// Shared service state. Verdict writes go through one lock, so the log
/// order equals the order in which verdicts became active.
pub struct ReviewState {
    queue: ReviewQueue,
    image_root: PathBuf,
    style: PlotStyle,
    inner: Mutex<Inner>,
}

impl ReviewState {
    /// `image_root` resolves record paths; an existing verdict log is
    /// replayed before serving.
    pub fn new(
        queue: ReviewQueue,
        image_root: impl Into<PathBuf>,
        log_path: Option<&Path>,
        style: PlotStyle,
    ) -> Result<Self, ReviewError> {
        queue.validate()?;
        let (log, verdicts) = match log_path {
            Some(p) => {
                let (log, state) = VerdictLog::open(p, &queue)?;
                (Some(log), state)
            }
            None => (None, VerdictState::default()),
        };
        Ok(Self {
            queue,
            image_root: image_root.into(),
            style,
            inner: Mutex::new(Inner { verdicts, log }),
        })
    }

    pub fn queue(&self) -> &ReviewQueue {
        &self.queue
    }

    /// Consistent copy of the verdict state.
    pub fn snapshot(&self) -> VerdictState {
        self.inner.lock().expect("state lock").verdicts.clone()
    }

    pub fn submit(&self, input: VerdictInput) -> Result<(Verdict, usize), ReviewError> {
        let v = Verdict::stamp(input, Utc::now());
        let mut inner = self.inner.lock().expect("state lock");
        if self.queue.item(&v.image_id).is_none() {
            return Err(ReviewError::UnknownImage(v.image_id));
        }
        if let Some(log) = inner.log.as_mut() {
            log.append(&v)?;
        }
        inner.verdicts.apply(&self.queue, v.clone())?;
        let n = inner.verdicts.history_of(&v.image_id).count();
        Ok((v, n))
    }

    pub fn flush(&self) -> Result<(), ReviewError> {
        match self.inner.lock().expect("state lock").log.as_mut() {
            Some(l) => l.flush(),
            None => Ok(()),
        }
    }

    fn load_image(&self, id: &str) -> Result<(RasterImage, Vec<u8>, &ImageRecord), ApiError> {
        let item = self
            .queue
            .item(id)
            .ok_or_else(|| ApiError::from(ReviewError::UnknownImage(id.to_string())))?;
        let path = self.image_root.join(&item.record.path);
        let bytes = std::fs::read(&path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
        let img = RasterImage::decode_png(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok((img, bytes, &item.record))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    unreviewed: Vec<String>,
}

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn internal(error: String) -> Self {
        ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            ErrorBody {
                error,
                unreviewed: vec![],
            },
        )
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::UnknownImage(_) => StatusCode::NOT_FOUND,
            ReviewError::Unreviewed(_) => StatusCode::CONFLICT,
            ReviewError::BadFilter(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let unreviewed = match &e {
            ReviewError::Unreviewed(ids) => ids.clone(),
            _ => vec![],
        };
        ApiError(
            status,
            ErrorBody {
                error: e.to_string(),
                unreviewed,
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

/// One entry of `GET /queue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItemView {
    pub image_id: String,
    pub image_url: String,
    pub overlay_url: String,
    pub record: ImageRecord,
    pub gate: Option<GateDecision>,
    pub verdict: Option<Verdict>,
    pub history_len: usize,
}

/// Response of `POST /verdict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictAck {
    pub verdict: Verdict,
    pub history_len: usize,
}

type Shared = Arc<ReviewState>;

async fn queue_handler(State(s): State<Shared>) -> Json<Vec<QueueItemView>> {
    let verdicts = s.snapshot();
    Json(
        s.queue
            .items
            .iter()
            .map(|it| {
                let id = &it.record.id;
                QueueItemView {
                    image_id: id.clone(),
                    image_url: format!("/image/{id}"),
                    overlay_url: format!("/overlay/{id}"),
                    record: it.record.clone(),
                    gate: it.gate.clone(),
                    verdict: verdicts.active(id).cloned(),
                    history_len: verdicts.history_of(id).count(),
                }
            })
            .collect(),
    )
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn image_handler(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let (_, bytes, _) = s.load_image(&id)?;
    Ok(png(bytes))
}

async fn overlay_handler(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let (img, _, record) = s.load_image(&id)?;
    let mut canvas = img.to_rgb();
    draw_annotations(&mut canvas, &record.annotations, &s.style).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(png(canvas
        .encode_png()
        .map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn verdict_handler(
    State(s): State<Shared>,
    body: Result<Json<VerdictInput>, JsonRejection>,
) -> Result<Json<VerdictAck>, ApiError> {
    let Json(input) = body.map_err(|e| {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorBody {
                error: e.body_text(),
                unreviewed: vec![],
            },
        )
    })?;
    let (verdict, history_len) = s.submit(input)?;
    Ok(Json(VerdictAck { verdict, history_len }))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    filter: Option<String>,
}

async fn export_handler(State(s): State<Shared>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let filter: ExportFilter = q.filter.as_deref().unwrap_or("all").parse()?;
    let m = export_curated(&s.queue, &s.snapshot(), filter)?;
    Ok(Json(m).into_response())
}

/// Builds the API router. With `static_dir`, unmatched paths are served
/// from that directory (the review frontend).
pub fn review_router(state: Arc<ReviewState>, static_dir: Option<&Path>) -> Router {
    let router = Router::new()
        .route("/queue", get(queue_handler))
        .route("/image/{id}", get(image_handler))
        .route("/overlay/{id}", get(overlay_handler))
        .route("/verdict", post(verdict_handler))
        .route("/export", get(export_handler))
        .with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}
