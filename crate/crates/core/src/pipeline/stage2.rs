use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::generation::{call_with_retry, GenerationService, RetryPolicy};
use super::{derive_seed, MonitorLog, PipelineError};
use crate::dataset::{compose_prompt, DatasetManifest, ImageRecord, PromptConfig};
use crate::iqa::{
    cropped_fr_score, embed_set, fid_report, kid_report, EmbeddingProvider, FrMetric, MetricReport, SsimParams,
};
use crate::raster::{render_annotation_plot, PlotStyle, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    Psnr,
    Ssim,
    EmbedDistance,
    CroppedPsnr,
    CroppedSsim,
    CroppedEmbedDistance,
    Fid,
    Kid,
}

impl ValidationMetric {
    pub const ALL: [ValidationMetric; 8] = [
        ValidationMetric::Psnr,
        ValidationMetric::Ssim,
        ValidationMetric::EmbedDistance,
        ValidationMetric::CroppedPsnr,
        ValidationMetric::CroppedSsim,
        ValidationMetric::CroppedEmbedDistance,
        ValidationMetric::Fid,
        ValidationMetric::Kid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ValidationMetric::Psnr => "psnr",
            ValidationMetric::Ssim => "ssim",
            ValidationMetric::EmbedDistance => "embed_distance",
            ValidationMetric::CroppedPsnr => "cropped_psnr",
            ValidationMetric::CroppedSsim => "cropped_ssim",
            ValidationMetric::CroppedEmbedDistance => "cropped_embed_distance",
            ValidationMetric::Fid => "fid",
            ValidationMetric::Kid => "kid",
        }
    }

    fn fr<'a>(&self, provider: &'a dyn EmbeddingProvider) -> Option<(FrMetric<'a>, bool)> {
        Some(match self {
            ValidationMetric::Psnr => (FrMetric::Psnr, false),
            ValidationMetric::Ssim => (FrMetric::Ssim(SsimParams::default()), false),
            ValidationMetric::EmbedDistance => (FrMetric::Embedding(provider), false),
            ValidationMetric::CroppedPsnr => (FrMetric::Psnr, true),
            ValidationMetric::CroppedSsim => (FrMetric::Ssim(SsimParams::default()), true),
            ValidationMetric::CroppedEmbedDistance => (FrMetric::Embedding(provider), true),
            ValidationMetric::Fid | ValidationMetric::Kid => return None,
        })
    }
}

impl fmt::Display for ValidationMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ValidationMetric {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ValidationMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PipelineError::Series(format!("unknown validation metric `{s}`")))
    }
}

/// A validation record and its original image.
#[derive(Debug, Clone)]
pub struct ValidationItem {
    pub record: ImageRecord,
    pub reference: RasterImage,
}

pub struct Stage2Config<'a> {
    pub prompts: &'a PromptConfig,
    pub style: &'a PlotStyle,
    pub provider: &'a dyn EmbeddingProvider,
    pub metrics: Vec<ValidationMetric>,
    pub seed: u64,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub checkpoint: String,
    pub step: u64,
    pub n_items: usize,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_ids: Vec<String>,
    pub metrics: Vec<MetricReport>,
}

impl Stage2Report {
    /// Appends one point per metric. Non-finite values (PSNR of identical
    /// images) cannot enter a series and are returned instead.
    pub fn append_to(&self, log: &mut MonitorLog) -> Result<Vec<String>, PipelineError> {
        let mut skipped = Vec::new();
        for r in &self.metrics {
            if r.value.is_finite() {
                log.record(&r.metric_name, self.step, r.value)?;
            } else {
                skipped.push(r.metric_name.clone());
            }
        }
        Ok(skipped)
    }
}

fn mean_report(name: &str, values: &[f64], skipped: usize) -> MetricReport {
    let value = values.iter().sum::<f64>() / values.len() as f64;
    let mut r = MetricReport::new(name, value);
    r.sample_sizes = vec![values.len()];
    if skipped > 0 {
        r.warnings.push(format!("{skipped} items without annotations skipped"));
    }
    r
}

/// Validates one checkpoint: every validation record's annotation plot is
/// sent through `service` with its domain's prompt, and the outputs are
/// scored against the originals.
///
/// Full-reference metrics are averaged over items (cropped variants first
/// average over the boxes of each item). FID and KID compare the embedded
/// outputs with the embedded originals. Failed generations are left out of
/// every aggregate and counted in the report.
pub fn stage2_validation_pass(
    checkpoint: &str,
    step: u64,
    val: &DatasetManifest,
    items: &[ValidationItem],
    service: &dyn GenerationService,
    cfg: &Stage2Config<'_>,
) -> Result<Stage2Report, PipelineError> {
    if items.is_empty() {
        return Err(PipelineError::Plan("validation set is empty".into()));
    }
    let mut generated: Vec<(usize, RasterImage)> = Vec::with_capacity(items.len());
    let mut failed_ids = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let r = &item.record;
        let domain = val
            .domain(&r.domain)
            .ok_or_else(|| PipelineError::Plan(format!("{}: unknown domain `{}`", r.id, r.domain)))?;
        let prompt = compose_prompt(cfg.prompts, domain)?;
        let plot = render_annotation_plot(&r.annotations, r.width, r.height, cfg.style)?;
        let png = plot.encode_png()?;
        let seed = derive_seed(cfg.seed, &r.id);
        let (_, out) = call_with_retry(service, &png, &prompt, seed, &cfg.retry);
        match out
            .and_then(|b| RasterImage::decode_png(&b).map_err(|e| super::GenerationError::Malformed(e.to_string())))
        {
            Ok(img) if img.same_shape(&item.reference) => generated.push((i, img)),
            Ok(img) => {
                log::warn!(
                    "{}: generated {}x{} does not match the reference",
                    r.id,
                    img.width(),
                    img.height()
                );
                failed_ids.push(r.id.clone());
            }
            Err(e) => {
                log::warn!("{}: generation failed: {e}", r.id);
                failed_ids.push(r.id.clone());
            }
        }
    }

    let mut metrics = Vec::new();
    let mut seen = cfg.metrics.clone();
    seen.sort();
    seen.dedup();
    for m in seen {
        if generated.is_empty() {
            break;
        }
        let report = match m.fr(cfg.provider) {
            Some((fr, false)) => {
                let values = generated
                    .iter()
                    .map(|(i, g)| fr.evaluate(&items[*i].reference, g))
                    .collect::<Result<Vec<_>, _>>()?;
                mean_report(m.name(), &values, 0)
            }
            Some((fr, true)) => {
                let mut values = Vec::new();
                let mut skipped = 0;
                for (i, g) in &generated {
                    let anns = &items[*i].record.annotations;
                    if anns.is_empty() {
                        skipped += 1;
                        continue;
                    }
                    values.push(cropped_fr_score(&items[*i].reference, g, anns, fr)?.value);
                }
                if values.is_empty() {
                    continue;
                }
                mean_report(m.name(), &values, skipped)
            }
            None => {
                let refs = embed_set(
                    cfg.provider,
                    generated
                        .iter()
                        .map(|(i, _)| (items[*i].record.id.clone(), &items[*i].reference)),
                )?;
                let gens = embed_set(
                    cfg.provider,
                    generated.iter().map(|(i, g)| (items[*i].record.id.clone(), g)),
                )?;
                let mut r = if m == ValidationMetric::Fid {
                    fid_report(&gens, &refs)?
                } else {
                    kid_report(&gens, &refs)?
                };
                r.metric_name = m.name().into();
                r
            }
        };
        metrics.push(report);
    }
    Ok(Stage2Report {
        checkpoint: checkpoint.to_string(),
        step,
        n_items: items.len(),
        n_failed: failed_ids.len(),
        failed_ids,
        metrics,
    })
}
