//! Workflow orchestration: checkpoint monitoring, the `a..g` augmentation
//! plans, calls to the generation service, Stage-1 pair preparation,
//! Stage-2 validation passes, PCA export and run manifests.

mod generation;
mod monitor;
mod pca;
mod plans;
mod stage1;
mod stage2;

pub use generation::{
    generate, generate_batch, mock_router, requests_from_log, BatchOutcome, GenerationError, GenerationLogEntry,
    GenerationOutcome, GenerationRequest, GenerationService, GenerationStatus, HttpGenerationClient, MockGenerator,
    MockMode, RetryPolicy, CONDITIONING_SIZE,
};
pub use monitor::{load_series_csv, select_best_checkpoint, CheckpointPoint, CheckpointSeries, MonitorLog, Polarity};
pub use pca::{pca_project, write_pca_csv, PcaProjection};
pub use plans::{
    build_plans, AugmentationPlan, PlanSource, SourceKind, ValidationSource, BASE_TRAIN_SIZE, GENERATED_COUNTS,
};
pub use stage1::{enumerate_stage1_pairs, materialize_stage1, write_pairs_jsonl, Stage1Pair};
pub use stage2::{stage2_validation_pass, Stage2Config, Stage2Report, ValidationItem, ValidationMetric};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default number of generation requests in flight.
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("checkpoint series: {0}")]
    Series(String),
    #[error("plan: {0}")]
    Plan(String),
    #[error("pca: {0}")]
    Pca(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
    #[error(transparent)]
    Edge(#[from] crate::edge::EdgeError),
    #[error(transparent)]
    Iqa(#[from] crate::iqa::IqaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-item seed from a run seed and an item key.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// What a run did, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_label: Option<String>,
    #[serde(default)]
    pub member_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<crate::iqa::ProviderConfig>,
    /// Item seeds keyed by item id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            seed,
            plan_label: None,
            member_ids: Vec::new(),
            service_endpoint: None,
            provider: None,
            seeds: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
