//! Annotation data model, manifest persistence and validation, splitting,
//! prompt composition and the COCO-style adapter.
//!
//! A [`DatasetManifest`] is a single JSON document holding every image
//! record together with its `Shoot` annotations. Manifests are plain values:
//! once loaded they are never mutated in place, new manifests are built
//! instead.

mod coco;
mod manifest;
mod prompt;
mod split;
mod types;

pub use coco::{from_coco, to_coco, CocoAnnotation, CocoCategory, CocoDataset, CocoImage, CocoImportOptions};
pub use manifest::{
    load_manifest, load_manifest_with, parse_manifest, resolve_record_path, save_manifest, validate_manifest,
    ValidationOptions,
};
pub use prompt::{compose_prompt, load_prompt_config, PromptConfig, PROMPT_SEPARATOR};
pub use split::split_manifest;
pub use types::{
    BBox, DatasetManifest, DomainTag, ImageRecord, Keypoint, Provenance, ShootAnnotation, Split, MAX_KEYPOINTS,
    SCHEMA_VERSION, SHOOT_CLASS,
};

use std::path::PathBuf;

/// Errors raised while loading, validating or transforming datasets.
#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("record `{record}`: {message}")]
    Invalid { record: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("split fraction {0} outside the open interval (0, 1)")]
    BadFraction(f64),
    #[error("nothing to split: no real annotated records")]
    NothingToSplit,
    #[error("prompt config has no entry for domain `{0}`")]
    MissingPrompt(String),
    #[error("prompt config: {0}")]
    Prompt(String),
}

impl DatasetError {
    pub(crate) fn invalid(record: &str, message: impl Into<String>) -> Self {
        DatasetError::Invalid {
            record: record.to_string(),
            message: message.into(),
        }
    }
}
