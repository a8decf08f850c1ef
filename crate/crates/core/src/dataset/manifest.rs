use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::types::{DatasetManifest, ImageRecord, SCHEMA_VERSION};
use super::DatasetError;

/// Knobs for manifest validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    /// Allowed slack when a visible node sits above its predecessor. 0 means strict.
    pub order_tolerance: f64,
    /// Visible nodes may lie up to this many pixels outside their box.
    pub keypoint_margin: f64,
    /// Required side length of square ingested images, if any.
    pub required_size: Option<u32>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            order_tolerance: 0.0,
            keypoint_margin: 5.0,
            required_size: Some(512),
        }
    }
}

/// Loads and validates a manifest using the default [`ValidationOptions`].
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    load_manifest_with(path, &ValidationOptions::default())
}

pub fn load_manifest_with(path: impl AsRef<Path>, opts: &ValidationOptions) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, opts)
}

/// Parses manifest JSON and validates every invariant.
pub fn parse_manifest(text: &str, opts: &ValidationOptions) -> Result<DatasetManifest, DatasetError> {
    let manifest: DatasetManifest = serde_json::from_str(text)?;
    validate_manifest(&manifest, opts)?;
    Ok(manifest)
}

/// Writes the manifest as pretty JSON with a trailing newline.
pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn validate_manifest(m: &DatasetManifest, opts: &ValidationOptions) -> Result<(), DatasetError> {
    if m.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::Manifest(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    let mut domain_names = HashSet::new();
    for d in &m.domains {
        if d.name.is_empty() || d.prompt_key.is_empty() {
            return Err(DatasetError::Manifest("domain with empty name or prompt_key".into()));
        }
        if !domain_names.insert(d.name.as_str()) {
            return Err(DatasetError::Manifest(format!("duplicate domain `{}`", d.name)));
        }
    }
    let mut ids = HashSet::new();
    for r in &m.records {
        if !ids.insert(r.id.as_str()) {
            return Err(DatasetError::invalid(&r.id, "duplicate record id"));
        }
        if !domain_names.contains(r.domain.as_str()) {
            return Err(DatasetError::invalid(&r.id, format!("unknown domain `{}`", r.domain)));
        }
        validate_record(r, opts)?;
    }
    Ok(())
}

fn validate_record(r: &ImageRecord, opts: &ValidationOptions) -> Result<(), DatasetError> {
    if r.id.is_empty() {
        return Err(DatasetError::invalid("", "empty record id"));
    }
    if let Some(side) = opts.required_size {
        if r.width != side || r.height != side {
            return Err(DatasetError::invalid(
                &r.id,
                format!("image is {}x{}, expected {side}x{side}", r.width, r.height),
            ));
        }
    }
    for (i, ann) in r.annotations.iter().enumerate() {
        ann.check(r.width, r.height, opts.keypoint_margin, opts.order_tolerance)
            .map_err(|msg| DatasetError::invalid(&r.id, format!("annotation {i}: {msg}")))?;
    }
    Ok(())
}

/// Resolves a record's image path against the directory holding its manifest.
pub fn resolve_record_path(manifest_path: &Path, record: &ImageRecord) -> PathBuf {
    let p = Path::new(&record.path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(p)
}
