//! Image-quality assessment.
//!
//! * full-reference: [`psnr`], [`ssim`], [`embed_distance`], and the
//!   box-cropped variants in [`cropped_fr_score`];
//! * no-reference: [`total_variation`];
//! * distribution-based over [`FeatureSet`]s: [`fid`] and [`kid`].
//!
//! Learned perceptual metrics are not implemented here. They plug in
//! through [`EmbeddingProvider`], either the hermetic
//! [`BuiltinDescriptor`] or a [`RemoteProvider`] speaking the `/embed`
//! protocol.

mod distribution;
mod features;
mod fr;

pub use distribution::{fid, fid_report, kid, kid_report, sample_warnings, FID_SMALL_SAMPLE};
pub use features::{
    cosine_distance, embed_distance, embed_set, euclidean_distance, BuiltinDescriptor, EmbedResponse,
    EmbeddingProvider, FeatureSet, FeatureVector, ProviderConfig, RemoteProvider, BUILTIN_DIM,
};
pub use fr::{cropped_fr_score, psnr, ssim, total_variation, FrMetric, SsimParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error)]
pub enum IqaError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("image {width}x{height} is smaller than the {window}px window")]
    TooSmall { width: u32, height: u32, window: usize },
    #[error("feature dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("feature set: {0}")]
    Features(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("no boxes to score")]
    NoBoxes,
    #[error("box {index} outside image: {message}")]
    BoxOutside { index: usize, message: String },
    #[error("embedding provider `{provider}`: {message}")]
    Provider { provider: String, message: String },
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}

/// One metric value with its context. Infinite values (PSNR of identical
/// images) are written to JSON as `"value": null, "infinite": true`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric_name: String,
    pub value: f64,
    pub sample_sizes: Vec<usize>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn new(metric_name: impl Into<String>, value: f64) -> Self {
        Self {
            metric_name: metric_name.into(),
            value,
            sample_sizes: Vec::new(),
            params: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metric report serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct MetricReportRepr {
    metric_name: String,
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    infinite: bool,
    #[serde(default)]
    sample_sizes: Vec<usize>,
    #[serde(default)]
    params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl Serialize for MetricReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let infinite = self.value.is_infinite();
        MetricReportRepr {
            metric_name: self.metric_name.clone(),
            value: if self.value.is_finite() { Some(self.value) } else { None },
            infinite,
            sample_sizes: self.sample_sizes.clone(),
            params: self.params.clone(),
            warnings: self.warnings.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricReport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = MetricReportRepr::deserialize(d)?;
        let value = match (r.value, r.infinite) {
            (_, true) => f64::INFINITY,
            (Some(v), false) => v,
            (None, false) => f64::NAN,
        };
        Ok(MetricReport {
            metric_name: r.metric_name,
            value,
            sample_sizes: r.sample_sizes,
            params: r.params,
            warnings: r.warnings,
        })
    }
}
