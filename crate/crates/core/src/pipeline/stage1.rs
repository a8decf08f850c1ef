use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{compose_prompt, resolve_record_path, DatasetManifest, PromptConfig};
use crate::edge::{canny, CannyPreset};
use crate::raster::RasterImage;

/// One Stage-1 training pair: the edge map of a (possibly flipped) image
/// and the image itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Pair {
    pub id: String,
    pub source_id: String,
    pub preset: String,
    pub flipped: bool,
    /// Paths relative to the output directory.
    pub conditioning: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

fn flip_tag(flipped: bool) -> &'static str {
    if flipped {
        "flip"
    } else {
        "orig"
    }
}

/// Every record x preset x {original, flipped}, in record order.
pub fn enumerate_stage1_pairs(
    pool: &DatasetManifest,
    presets: &[CannyPreset],
    prompts: Option<&PromptConfig>,
) -> Result<Vec<Stage1Pair>, PipelineError> {
    let mut out = Vec::with_capacity(pool.records.len() * presets.len() * 2);
    for r in &pool.records {
        let prompt = match prompts {
            Some(cfg) => {
                let domain = pool
                    .domain(&r.domain)
                    .ok_or_else(|| PipelineError::Plan(format!("{}: unknown domain `{}`", r.id, r.domain)))?;
                Some(compose_prompt(cfg, domain)?)
            }
            None => None,
        };
        for flipped in [false, true] {
            let target = format!("target/{}__{}.png", r.id, flip_tag(flipped));
            for p in presets {
                let id = format!("{}__{}__{}", r.id, p.name, flip_tag(flipped));
                out.push(Stage1Pair {
                    conditioning: format!("conditioning/{id}.png"),
                    id,
                    source_id: r.id.clone(),
                    preset: p.name.clone(),
                    flipped,
                    target: target.clone(),
                    prompt: prompt.clone(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_pairs_jsonl(mut w: impl Write, pairs: &[Stage1Pair]) -> Result<(), PipelineError> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes target and conditioning PNGs for every pair plus `pairs.jsonl`
/// under `out_dir`. Source images are resolved relative to the manifest.
pub fn materialize_stage1(
    pool: &DatasetManifest,
    manifest_path: &Path,
    presets: &[CannyPreset],
    prompts: Option<&PromptConfig>,
    out_dir: &Path,
    parallelism: usize,
) -> Result<Vec<Stage1Pair>, PipelineError> {
    let pairs = enumerate_stage1_pairs(pool, presets, prompts)?;
    std::fs::create_dir_all(out_dir.join("target"))?;
    std::fs::create_dir_all(out_dir.join("conditioning"))?;
    let next = AtomicUsize::new(0);
    let first_error: Mutex<Option<PipelineError>> = Mutex::new(None);
    let work = |i: usize| -> Result<(), PipelineError> {
        let r = &pool.records[i];
        let img = RasterImage::load_png(resolve_record_path(manifest_path, r))?;
        for flipped in [false, true] {
            let img = if flipped {
                img.flipped_horizontally()
            } else {
                img.clone()
            };
            img.save_png(out_dir.join(format!("target/{}__{}.png", r.id, flip_tag(flipped))))?;
            for p in presets {
                let edges = canny(&img, p)?;
                edges.save_png(out_dir.join(format!(
                    "conditioning/{}__{}__{}.png",
                    r.id,
                    p.name,
                    flip_tag(flipped)
                )))?;
            }
        }
        Ok(())
    };
    std::thread::scope(|s| {
        for _ in 0..parallelism.clamp(1, pool.records.len().max(1)) {
            s.spawn(|| loop {
                if first_error.lock().expect("error lock").is_some() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= pool.records.len() {
                    break;
                }
                if let Err(e) = work(i) {
                    first_error.lock().expect("error lock").get_or_insert(e);
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let mut index = std::io::BufWriter::new(std::fs::File::create(out_dir.join("pairs.jsonl"))?);
    write_pairs_jsonl(&mut index, &pairs)?;
    index.flush()?;
    Ok(pairs)
}
