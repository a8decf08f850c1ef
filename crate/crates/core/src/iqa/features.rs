use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::IqaError;
use crate::raster::RasterImage;

/// Embedding of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

/// Embeddings of an image set, all from one provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub provider_name: String,
    ids: Vec<String>,
    vectors: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn new(
        provider_name: impl Into<String>,
        ids: Vec<String>,
        vectors: Vec<FeatureVector>,
    ) -> Result<Self, IqaError> {
        let set = FeatureSet {
            provider_name: provider_name.into(),
            ids,
            vectors,
        };
        set.validate()?;
        Ok(set)
    }

    /// Builds a set from raw rows, naming members `0`, `1`, ...
    pub fn from_rows(provider_name: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self, IqaError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(provider_name, ids, rows.into_iter().map(FeatureVector).collect())
    }

    pub fn validate(&self) -> Result<(), IqaError> {
        if self.ids.len() != self.vectors.len() {
            return Err(IqaError::Features(format!(
                "{} ids for {} vectors",
                self.ids.len(),
                self.vectors.len()
            )));
        }
        if let Some(first) = self.vectors.first() {
            let d = first.dim();
            for (id, v) in self.ids.iter().zip(&self.vectors) {
                if v.dim() != d {
                    return Err(IqaError::Dimension(d, v.dim()));
                }
                if v.0.iter().any(|x| !x.is_finite()) {
                    return Err(IqaError::Features(format!("non-finite feature in `{id}`")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Feature dimension; 0 for an empty set.
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, FeatureVector::dim)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureVector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Members in the given order of indices.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            provider_name: self.provider_name.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
        }
    }

    /// Appends the members of `other`. Provider and dimension must agree.
    pub fn extend(&mut self, other: &FeatureSet) -> Result<(), IqaError> {
        if !self.is_empty() && !other.is_empty() && self.dim() != other.dim() {
            return Err(IqaError::Dimension(self.dim(), other.dim()));
        }
        self.ids.extend(other.ids.iter().cloned());
        self.vectors.extend(other.vectors.iter().cloned());
        Ok(())
    }
}

/// Maps images to feature vectors. Implementations must be deterministic
/// and safe to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Dimension of every produced vector, when known up front.
    fn dim(&self) -> Option<usize>;
    fn embed(&self, img: &RasterImage) -> Result<FeatureVector, IqaError>;
}

/// Embeds `(id, image)` pairs in order.
pub fn embed_set<'a>(
    provider: &dyn EmbeddingProvider,
    items: impl IntoIterator<Item = (String, &'a RasterImage)>,
) -> Result<FeatureSet, IqaError> {
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (id, img) in items {
        vectors.push(provider.embed(img)?);
        ids.push(id);
    }
    FeatureSet::new(provider.name(), ids, vectors)
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`; exactly 0 for equal vectors.
pub fn cosine_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, IqaError> {
    if a.dim() != b.dim() {
        return Err(IqaError::Dimension(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(IqaError::ZeroNorm);
    }
    if a == b {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

pub fn euclidean_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, IqaError> {
    if a.dim() != b.dim() {
        return Err(IqaError::Dimension(a.dim(), b.dim()));
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Cosine distance between the provider embeddings of two images.
pub fn embed_distance(a: &RasterImage, b: &RasterImage, provider: &dyn EmbeddingProvider) -> Result<f64, IqaError> {
    cosine_distance(&provider.embed(a)?, &provider.embed(b)?)
}

pub const BUILTIN_DIM: usize = 48;

/// Hermetic hand-crafted descriptor used when no external model is
/// configured: three 8-bin channel histograms, an 8-bin magnitude-weighted
/// gradient-orientation histogram and a 4x4 grid of mean luma, L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinDescriptor;

impl BuiltinDescriptor {
    pub const NAME: &'static str = "builtin-descriptor-v1";

    pub fn describe(img: &RasterImage) -> FeatureVector {
        let mut v = Self::raw(img);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        FeatureVector(v)
    }

    /// Descriptor before L2 normalization.
    fn raw(img: &RasterImage) -> Vec<f64> {
        let rgb = img.to_rgb();
        let gray = img.to_gray();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let n = (w * h).max(1) as f64;
        let mut v = Vec::with_capacity(BUILTIN_DIM);

        let mut hist = [[0u64; 8]; 3];
        for px in rgb.pixels().chunks_exact(3) {
            for c in 0..3 {
                hist[c][usize::from(px[c] >> 5)] += 1;
            }
        }
        for ch in &hist {
            v.extend(ch.iter().map(|&c| c as f64 / n));
        }

        let g = gray.pixels();
        let at = |x: usize, y: usize| f64::from(g[y * w + x]);
        let mut orient = [0.0f64; 8];
        for y in 0..h {
            for x in 0..w {
                let dx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
                let dy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
                let mag = dx.hypot(dy);
                if mag > 0.0 {
                    let t = (dy.atan2(dx) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
                    orient[((t * 8.0) as usize).min(7)] += mag;
                }
            }
        }
        let total: f64 = orient.iter().sum();
        v.extend(orient.iter().map(|&m| if total > 0.0 { m / total } else { 0.0 }));

        for gy in 0..4 {
            for gx in 0..4 {
                let (x0, x1) = (gx * w / 4, ((gx + 1) * w / 4).max(gx * w / 4 + 1).min(w));
                let (y0, y1) = (gy * h / 4, ((gy + 1) * h / 4).max(gy * h / 4 + 1).min(h));
                let mut sum = 0.0;
                let mut count = 0usize;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += at(x, y);
                        count += 1;
                    }
                }
                v.push(if count > 0 { sum / count as f64 / 255.0 } else { 0.0 });
            }
        }
        v
    }
}

impl EmbeddingProvider for BuiltinDescriptor {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> Option<usize> {
        Some(BUILTIN_DIM)
    }

    fn embed(&self, img: &RasterImage) -> Result<FeatureVector, IqaError> {
        Ok(Self::describe(img))
    }
}

/// Response body of the `/embed` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub values: Vec<f64>,
}

/// Embedding service client: `POST {endpoint}/embed` with a PNG body,
/// answered by an [`EmbedResponse`].
pub struct RemoteProvider {
    name: String,
    url: String,
    dim: Option<usize>,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(
        name: impl Into<String>,
        endpoint: &str,
        dim: Option<usize>,
        timeout: Duration,
    ) -> Result<Self, IqaError> {
        let name = name.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| IqaError::Provider {
                provider: name.clone(),
                message: e.to_string(),
            })?;
        Ok(Self {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            name,
            dim,
            client,
        })
    }

    fn fail(&self, message: impl Into<String>) -> IqaError {
        IqaError::Provider {
            provider: self.name.clone(),
            message: message.into(),
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn embed(&self, img: &RasterImage) -> Result<FeatureVector, IqaError> {
        let body = img.encode_png()?;
        let resp = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(body)
            .send()
            .map_err(|e| self.fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(self.fail(format!("HTTP {}", resp.status())));
        }
        let bytes = resp.bytes().map_err(|e| self.fail(e.to_string()))?;
        let parsed: EmbedResponse =
            serde_json::from_slice(&bytes).map_err(|e| self.fail(format!("malformed response: {e}")))?;
        if parsed.values.len() != parsed.dim {
            return Err(self.fail(format!("dim {} but {} values", parsed.dim, parsed.values.len())));
        }
        if let Some(d) = self.dim {
            if d != parsed.dim {
                return Err(self.fail(format!("expected dim {d}, got {}", parsed.dim)));
            }
        }
        if parsed.values.iter().any(|v| !v.is_finite()) {
            return Err(self.fail("non-finite embedding value"));
        }
        Ok(FeatureVector(parsed.values))
    }
}

/// Provider selection as stored in JSON config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    #[default]
    Builtin,
    Remote {
        endpoint: String,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    30
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, IqaError> {
        Ok(match self {
            ProviderConfig::Builtin => Box::new(BuiltinDescriptor),
            ProviderConfig::Remote {
                endpoint,
                name,
                dim,
                timeout_secs,
            } => Box::new(RemoteProvider::new(
                name.clone().unwrap_or_else(|| format!("remote:{endpoint}")),
                endpoint,
                *dim,
                Duration::from_secs(*timeout_secs),
            )?),
        })
    }
}
