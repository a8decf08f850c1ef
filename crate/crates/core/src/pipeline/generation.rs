use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sha256_hex;
use crate::dataset::{ImageRecord, Provenance, ShootAnnotation, Split};
use crate::raster::RasterImage;

/// Side length of conditioning images accepted by the generator.
pub const CONDITIONING_SIZE: u32 = 512;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GenerationError {
    /// Connection refused, timeout, 5xx. Retried.
    #[error("transport: {0}")]
    Transport(String),
    #[error("service rejected the request: {0}")]
    Rejected(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("writing output: {0}")]
    Output(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

impl GenerationError {
    fn retryable(&self) -> bool {
        matches!(self, GenerationError::Transport(_))
    }
}

/// Image generator behind the `/generate` protocol: PNG conditioning,
/// prompt and seed in, PNG out.
pub trait GenerationService: Send + Sync {
    /// Identifies the service in logs (e.g. its endpoint).
    fn endpoint(&self) -> String;
    fn generate_png(&self, conditioning_png: &[u8], prompt: &str, seed: u64) -> Result<Vec<u8>, GenerationError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MockMode {
    /// Returns the base image unchanged.
    Echo,
    /// Adds uniform noise in `[-amplitude, amplitude]` seeded by
    /// `(seed, prompt)`.
    NoiseOverlay { amplitude: u8 },
}

/// Deterministic stand-in for the diffusion model.
///
/// The base image is the conditioning itself, or, when a reference was
/// registered for that exact conditioning, the reference. The latter
/// models a checkpoint that reproduces the validation target.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub mode: MockMode,
    references: HashMap<String, Arc<RasterImage>>,
}

impl MockGenerator {
    pub fn new(mode: MockMode) -> Self {
        Self {
            mode,
            references: HashMap::new(),
        }
    }

    pub fn echo() -> Self {
        Self::new(MockMode::Echo)
    }

    pub fn with_reference(mut self, conditioning_png: &[u8], reference: RasterImage) -> Self {
        self.add_reference(conditioning_png, reference);
        self
    }

    pub fn add_reference(&mut self, conditioning_png: &[u8], reference: RasterImage) {
        self.references
            .insert(sha256_hex(conditioning_png), Arc::new(reference));
    }

    pub fn render(&self, conditioning: &RasterImage, conditioning_png: &[u8], prompt: &str, seed: u64) -> RasterImage {
        let mut img = match self.references.get(&sha256_hex(conditioning_png)) {
            Some(r) => (**r).clone(),
            None => conditioning.clone(),
        };
        if let MockMode::NoiseOverlay { amplitude } = self.mode {
            let digest = sha256_hex(prompt.as_bytes());
            let salt = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            let a = amplitude as i16;
            let pixels: Vec<u8> = img
                .pixels()
                .iter()
                .map(|&p| (p as i16 + rng.random_range(-a..=a)).clamp(0, 255) as u8)
                .collect();
            img = RasterImage::new(img.width(), img.height(), img.channels(), pixels).expect("same shape");
        }
        img
    }
}

impl GenerationService for MockGenerator {
    fn endpoint(&self) -> String {
        match self.mode {
            MockMode::Echo => "mock:echo".into(),
            MockMode::NoiseOverlay { amplitude } => format!("mock:noise-overlay:{amplitude}"),
        }
    }

    fn generate_png(&self, conditioning_png: &[u8], prompt: &str, seed: u64) -> Result<Vec<u8>, GenerationError> {
        let cond = RasterImage::decode_png(conditioning_png).map_err(|e| GenerationError::BadRequest(e.to_string()))?;
        self.render(&cond, conditioning_png, prompt, seed)
            .encode_png()
            .map_err(|e| GenerationError::Output(e.to_string()))
    }
}

/// Client for a remote `/generate` endpoint.
pub struct HttpGenerationClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpGenerationClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, GenerationError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl GenerationService for HttpGenerationClient {
    fn endpoint(&self) -> String {
        self.endpoint.clone()
    }

    fn generate_png(&self, conditioning_png: &[u8], prompt: &str, seed: u64) -> Result<Vec<u8>, GenerationError> {
        use reqwest::blocking::multipart::{Form, Part};
        let part = Part::bytes(conditioning_png.to_vec())
            .file_name("conditioning.png")
            .mime_str("image/png")
            .map_err(|e| GenerationError::BadRequest(e.to_string()))?;
        let form = Form::new()
            .part("conditioning", part)
            .text("prompt", prompt.to_string())
            .text("seed", seed.to_string());
        let resp = self
            .client
            .post(format!("{}/generate", self.endpoint))
            .multipart(form)
            .send()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| GenerationError::Transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(GenerationError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(GenerationError::Rejected(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&body)
            )));
        }
        if !body.starts_with(b"\x89PNG\r\n\x1a\n") {
            return Err(GenerationError::Malformed("body is not a PNG".into()));
        }
        Ok(body.to_vec())
    }
}

async fn generate_handler(State(mock): State<Arc<MockGenerator>>, mut form: Multipart) -> Response {
    let bad = |m: String| (StatusCode::BAD_REQUEST, m).into_response();
    let (mut cond, mut prompt, mut seed) = (None, None, None);
    loop {
        let field = match form.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return bad(e.to_string()),
        };
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "conditioning" => match field.bytes().await {
                Ok(b) => cond = Some(b),
                Err(e) => return bad(e.to_string()),
            },
            "prompt" => match field.text().await {
                Ok(t) => prompt = Some(t),
                Err(e) => return bad(e.to_string()),
            },
            "seed" => match field.text().await.map(|t| t.trim().parse::<u64>()) {
                Ok(Ok(s)) => seed = Some(s),
                _ => return bad("seed must be an unsigned integer".into()),
            },
            _ => {}
        }
    }
    let (Some(cond), Some(prompt), Some(seed)) = (cond, prompt, seed) else {
        return bad("multipart needs conditioning, prompt and seed".into());
    };
    let result = tokio::task::spawn_blocking(move || mock.generate_png(&cond, &prompt, seed)).await;
    match result {
        Ok(Ok(png)) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Ok(Err(e)) => bad(e.to_string()),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// `POST /generate` backed by a mock generator.
pub fn mock_router(mock: MockGenerator) -> Router {
    Router::new()
        .route("/generate", post(generate_handler))
        .layer(DefaultBodyLimit::max(64 << 20))
        .with_state(Arc::new(mock))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 200,
        }
    }
}

/// One image to generate. The annotations are copied verbatim into the
/// output record.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub id: String,
    pub conditioning: RasterImage,
    /// Where the conditioning came from, kept in the log for replay.
    pub conditioning_path: Option<String>,
    pub prompt: String,
    pub seed: u64,
    pub domain: String,
    pub source_id: Option<String>,
    pub source_annotations: Vec<ShootAnnotation>,
}

impl GenerationRequest {
    fn check(&self) -> Result<(), GenerationError> {
        if self.prompt.trim().is_empty() {
            return Err(GenerationError::BadRequest(format!("{}: empty prompt", self.id)));
        }
        let (w, h) = (self.conditioning.width(), self.conditioning.height());
        if (w, h) != (CONDITIONING_SIZE, CONDITIONING_SIZE) {
            return Err(GenerationError::BadRequest(format!(
                "{}: conditioning is {w}x{h}, expected {CONDITIONING_SIZE}x{CONDITIONING_SIZE}",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Ok,
    Failed,
}

/// Everything needed to replay one request, plus what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLogEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    pub domain: String,
    pub prompt: String,
    pub seed: u64,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning_path: Option<String>,
    pub conditioning_sha256: String,
    pub source_annotations: Vec<ShootAnnotation>,
    pub attempts: u32,
    pub status: GenerationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub log: GenerationLogEntry,
    /// `None` when the item failed.
    pub record: Option<ImageRecord>,
}

pub(crate) fn call_with_retry(
    service: &dyn GenerationService,
    png: &[u8],
    prompt: &str,
    seed: u64,
    policy: &RetryPolicy,
) -> (u32, Result<Vec<u8>, GenerationError>) {
    let attempts = policy.max_attempts.max(1);
    let mut backoff = Duration::from_millis(policy.initial_backoff_ms);
    for attempt in 1..=attempts {
        match service.generate_png(png, prompt, seed) {
            Ok(out) => return (attempt, Ok(out)),
            Err(e) if e.retryable() && attempt < attempts => {
                log::warn!("generate attempt {attempt}/{attempts} failed: {e}; retrying in {backoff:?}");
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            Err(e) if e.retryable() => {
                return (
                    attempt,
                    Err(GenerationError::Exhausted {
                        attempts,
                        last: e.to_string(),
                    }),
                )
            }
            Err(e) => return (attempt, Err(e)),
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Runs one request and writes `<out_dir>/<id>.png`. The output record
/// has provenance `generated`, split `pool` and the request's
/// annotations. Failures are reported in the outcome, never raised.
pub fn generate(
    service: &dyn GenerationService,
    req: &GenerationRequest,
    out_dir: &Path,
    policy: &RetryPolicy,
) -> GenerationOutcome {
    let mut log = GenerationLogEntry {
        id: req.id.clone(),
        source_id: req.source_id.clone(),
        domain: req.domain.clone(),
        prompt: req.prompt.clone(),
        seed: req.seed,
        endpoint: service.endpoint(),
        conditioning_path: req.conditioning_path.clone(),
        conditioning_sha256: String::new(),
        source_annotations: req.source_annotations.clone(),
        attempts: 0,
        status: GenerationStatus::Failed,
        output_path: None,
        output_sha256: None,
        error: None,
    };
    let result = (|| -> Result<ImageRecord, GenerationError> {
        req.check()?;
        let png = req
            .conditioning
            .encode_png()
            .map_err(|e| GenerationError::BadRequest(e.to_string()))?;
        log.conditioning_sha256 = sha256_hex(&png);
        let (attempts, out) = call_with_retry(service, &png, &req.prompt, req.seed, policy);
        log.attempts = attempts;
        let out = out?;
        let img = RasterImage::decode_png(&out).map_err(|e| GenerationError::Malformed(e.to_string()))?;
        let file = format!("{}.png", req.id);
        std::fs::create_dir_all(out_dir).map_err(|e| GenerationError::Output(e.to_string()))?;
        std::fs::write(out_dir.join(&file), &out).map_err(|e| GenerationError::Output(e.to_string()))?;
        log.output_sha256 = Some(sha256_hex(&out));
        log.output_path = Some(file.clone());
        Ok(ImageRecord {
            id: req.id.clone(),
            path: file,
            width: img.width(),
            height: img.height(),
            domain: req.domain.clone(),
            split: Split::Pool,
            provenance: Provenance::Generated,
            annotations: req.source_annotations.clone(),
        })
    })();
    match result {
        Ok(record) => {
            log.status = GenerationStatus::Ok;
            GenerationOutcome {
                log,
                record: Some(record),
            }
        }
        Err(e) => {
            log::warn!("generation of {} failed: {e}", req.id);
            log.error = Some(e.to_string());
            GenerationOutcome { log, record: None }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// Successful records, in request order.
    pub records: Vec<ImageRecord>,
    /// One entry per request, in request order.
    pub log: Vec<GenerationLogEntry>,
}

impl BatchOutcome {
    pub fn failed_ids(&self) -> Vec<&str> {
        self.log
            .iter()
            .filter(|l| l.status == GenerationStatus::Failed)
            .map(|l| l.id.as_str())
            .collect()
    }
}

/// Runs requests with at most `parallelism` in flight. Output order
/// follows request order regardless of completion order.
pub fn generate_batch(
    service: &dyn GenerationService,
    reqs: &[GenerationRequest],
    out_dir: &Path,
    policy: &RetryPolicy,
    parallelism: usize,
) -> BatchOutcome {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<GenerationOutcome>>> = reqs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..parallelism.clamp(1, reqs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = reqs.get(i) else { break };
                let outcome = generate(service, req, out_dir, policy);
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    let mut out = BatchOutcome {
        records: Vec::new(),
        log: Vec::with_capacity(reqs.len()),
    };
    for slot in slots {
        let o = slot.into_inner().expect("slot lock").expect("every slot filled");
        out.log.push(o.log);
        out.records.extend(o.record);
    }
    out
}

/// Rebuilds requests from a log. Conditioning images are reloaded from
/// `conditioning_path` (relative to `base_dir`) and checked against the
/// recorded digest.
pub fn requests_from_log(
    log: &[GenerationLogEntry],
    base_dir: &Path,
) -> Result<Vec<GenerationRequest>, GenerationError> {
    log.iter()
        .map(|e| {
            let rel = e
                .conditioning_path
                .as_ref()
                .ok_or_else(|| GenerationError::BadRequest(format!("{}: log entry has no conditioning path", e.id)))?;
            let bytes = std::fs::read(base_dir.join(rel))
                .map_err(|err| GenerationError::BadRequest(format!("{rel}: {err}")))?;
            let conditioning =
                RasterImage::decode_png(&bytes).map_err(|err| GenerationError::BadRequest(err.to_string()))?;
            let digest = sha256_hex(
                &conditioning
                    .encode_png()
                    .map_err(|err| GenerationError::BadRequest(err.to_string()))?,
            );
            if digest != e.conditioning_sha256 {
                return Err(GenerationError::BadRequest(format!(
                    "{}: conditioning digest changed",
                    e.id
                )));
            }
            Ok(GenerationRequest {
                id: e.id.clone(),
                conditioning,
                conditioning_path: e.conditioning_path.clone(),
                prompt: e.prompt.clone(),
                seed: e.seed,
                domain: e.domain.clone(),
                source_id: e.source_id.clone(),
                source_annotations: e.source_annotations.clone(),
            })
        })
        .collect()
}
