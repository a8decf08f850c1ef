//! The `d4` command line.
//!
//! [`run`] parses argv, dispatches to one subcommand and turns the outcome
//! into an exit code: 0 on success, 1 on a validation or domain error, 2 on
//! a usage error. With `--json-errors` the error is also written to stderr
//! as one JSON object.
//!
//! Global options can come from a JSON [`CliConfig`] given by `--config`.
//! Flags always win over the file. Without either, the seed is
//! [`DEFAULT_SEED`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    from_coco, load_manifest_with, load_prompt_config, resolve_record_path, save_manifest, split_manifest, to_coco,
    validate_manifest, BBox, CocoDataset, CocoImportOptions, DatasetManifest, DomainTag, ImageRecord, Keypoint,
    PromptConfig, Provenance, ShootAnnotation, Split, ValidationOptions,
};
use crate::edge::{canny, default_presets, find_preset, load_presets, CannyPreset};
use crate::eval::{
    default_thresholds, load_coco_results, load_detections_jsonl, map_report, write_report_csv, EvalReport, OksParams,
    Task,
};
use crate::iqa::{EmbeddingProvider, FeatureSet, ProviderConfig};
use crate::pipeline::{
    build_plans, derive_seed, enumerate_stage1_pairs, generate_batch, load_series_csv, materialize_stage1, pca_project,
    requests_from_log, select_best_checkpoint, stage2_validation_pass, write_pairs_jsonl, write_pca_csv,
    GenerationLogEntry, GenerationRequest, GenerationService, GenerationStatus, HttpGenerationClient, MockGenerator,
    MockMode, MonitorLog, Polarity, RetryPolicy, RunManifest, Stage2Config, ValidationItem, ValidationMetric,
    CONDITIONING_SIZE, DEFAULT_PARALLELISM,
};
use crate::raster::{
    hflip, render_annotation_plot, synth_layout, synth_scene, LayoutParams, PlotStyle, RasterImage, SceneLighting,
};
use crate::review::{review_router, ReviewQueue, ReviewState};
use crate::selection::{gate_batch, BatchGate, DistanceMetric, GateDecision};

/// Seed used when neither `--seed` nor the config file sets one.
pub const DEFAULT_SEED: u64 = 212;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Domain(_) => "domain",
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        })*
    };
}

domain_errors!(
    crate::dataset::DatasetError,
    crate::raster::RasterError,
    crate::edge::EdgeError,
    crate::iqa::IqaError,
    crate::selection::SelectionError,
    crate::eval::EvalError,
    crate::pipeline::PipelineError,
    crate::pipeline::GenerationError,
    crate::review::ReviewError,
    serde_json::Error,
);

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Domain(format!("{}: {e}", path.display()))
}

/// Settings shared by subcommands, loaded from `--config`. Relative paths
/// are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub provider: Option<ProviderConfig>,
    /// Generation service base URL.
    pub endpoint: Option<String>,
    /// Canny preset overrides (JSON list).
    pub presets: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    /// Plot style (JSON).
    pub style: Option<PathBuf>,
    pub parallelism: Option<usize>,
    /// env_logger filter, e.g. `info` or `d4=debug`.
    pub log_level: Option<String>,
}

impl CliConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut cfg: CliConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.presets, &mut cfg.prompts, &mut cfg.style]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    /// Errors if a referenced file is missing.
    pub fn check_files(&self) -> CliResult {
        for p in [&self.presets, &self.prompts, &self.style].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Domain(format!(
                    "config references missing file {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "d4",
    version,
    about = "Generative augmentation toolkit for shoot detection datasets"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print errors to stderr as JSON.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a manifest from a directory of PNGs (optionally with COCO annotations) or synthesize one.
    Ingest(IngestArgs),
    /// Check a manifest's invariants.
    Validate(ValidateArgs),
    /// Split real annotated records into train and val.
    Split(SplitArgs),
    /// Render annotation plots.
    Plot(PlotArgs),
    /// Canny edge maps.
    Canny(CannyArgs),
    /// Augmentation plans and Stage-1 pair preparation.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Send annotation plots through a generation service.
    Generate(GenerateArgs),
    /// Quality gate generated images against a target-domain set.
    Select(SelectArgs),
    /// mAP evaluation of detections.
    Eval(EvalArgs),
    /// Checkpoint selection and Stage-2 validation passes.
    #[command(subcommand)]
    Monitor(MonitorCommand),
    /// Project embeddings of one or more sets onto principal components.
    Pca(PcaArgs),
    /// Serve the review API in the foreground.
    ReviewServe(ReviewServeArgs),
    /// Write a manifest in COCO keypoint format.
    CocoExport(CocoExportArgs),
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LightingArg {
    Day,
    Night,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory of PNG images.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    images: Option<PathBuf>,
    /// COCO keypoint annotations for the images (file names relative to --images).
    #[arg(long, requires = "images")]
    coco: Option<PathBuf>,
    /// Synthesize this many annotated images instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, value_enum, default_value = "night")]
    lighting: LightingArg,
    /// Output manifest; images go to `images/` beside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "night")]
    domain: String,
    /// Prompt key of the domain (defaults to the domain name).
    #[arg(long)]
    prompt_key: Option<String>,
    #[arg(long, default_value = "train", value_parser = parse_serde::<Split>)]
    split: Split,
    #[arg(long, default_value = "real", value_parser = parse_serde::<Provenance>)]
    provenance: Provenance,
    /// Side length images are resized to.
    #[arg(long, default_value_t = CONDITIONING_SIZE)]
    size: u32,
}

#[derive(Debug, Args)]
struct LenientArgs {
    /// Pixels a lower node may sit above its predecessor.
    #[arg(long, default_value_t = 0.0)]
    order_tolerance: f64,
    /// Pixels a node may lie outside its box.
    #[arg(long, default_value_t = 5.0)]
    keypoint_margin: f64,
    /// Accept images that are not 512x512.
    #[arg(long)]
    any_size: bool,
}

impl LenientArgs {
    fn options(&self) -> ValidationOptions {
        ValidationOptions {
            order_tolerance: self.order_tolerance,
            keypoint_margin: self.keypoint_margin,
            required_size: (!self.any_size).then_some(CONDITIONING_SIZE),
        }
    }
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    lenient: LenientArgs,
    /// Also check that every image file exists and has the recorded size.
    #[arg(long)]
    check_files: bool,
    /// Summary output (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Fraction of records that go to train.
    #[arg(long)]
    fraction: f64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_val: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Plot style (JSON).
    #[arg(long)]
    style: Option<PathBuf>,
    /// Also write the horizontally flipped plot as `<id>__flip.png`.
    #[arg(long)]
    flip: bool,
}

#[derive(Debug, Args)]
struct CannyArgs {
    /// Preset name or index.
    #[arg(long)]
    preset: String,
    /// Preset list (JSON) replacing the defaults.
    #[arg(long)]
    presets: Option<PathBuf>,
    #[arg(long = "in", required_unless_present = "manifest", requires = "out")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Process every record of a manifest instead of one file.
    #[arg(long, conflicts_with = "input", requires = "out_dir")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AugmentCommand {
    /// Build the seven training plans a..g from a base manifest.
    Plans(PlansArgs),
    /// Enumerate or write Stage-1 (canny conditioning, target) pairs.
    Stage1(Stage1Args),
}

#[derive(Debug, Args)]
struct PlansArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Keep only generated records listed in this file (one id per line).
    #[arg(long)]
    accepted: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write each plan's training manifest as `plan_<label>.json`.
    #[arg(long)]
    manifests_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Stage1Args {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    presets: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Only write `pairs.jsonl`.
    #[arg(long)]
    enumerate_only: bool,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Debug, Args)]
struct ServiceArgs {
    /// Generation service base URL.
    #[arg(long, conflicts_with = "mock")]
    endpoint: Option<String>,
    /// In-process mock: `echo` or `noise:<amplitude>`; `monitor validate` also takes `oracle`.
    #[arg(long)]
    mock: Option<String>,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    #[arg(long, default_value_t = RetryPolicy::default().max_attempts)]
    max_attempts: u32,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Source manifest whose annotations are plotted into conditioning images.
    #[arg(long, required_unless_present = "replay")]
    manifest: Option<PathBuf>,
    /// Re-issue the requests recorded in a generation log.
    #[arg(long, conflicts_with = "manifest")]
    replay: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long, default_value = "day")]
    target_domain: String,
    /// Prompt key of the target domain when it is not in the manifest.
    #[arg(long)]
    target_prompt_key: Option<String>,
    /// Images per source record.
    #[arg(long, default_value_t = 1)]
    per_record: usize,
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Manifest holding the target-domain set.
    #[arg(long)]
    target: PathBuf,
    /// Restrict the target set to one domain.
    #[arg(long)]
    target_domain: Option<String>,
    /// Candidate manifest or directory of PNGs.
    #[arg(long)]
    candidates: PathBuf,
    /// Embedding provider config (JSON).
    #[arg(long)]
    provider: Option<PathBuf>,
    #[arg(long, default_value = "cosine", value_parser = parse_serde::<DistanceMetric>)]
    metric: DistanceMetric,
    /// Decisions as JSON lines (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted ids, one per line.
    #[arg(long)]
    accepted_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Bbox,
    Keypoint,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth manifest.
    #[arg(long)]
    gt: PathBuf,
    /// Detections as JSON lines.
    #[arg(long, required_unless_present = "coco_results", conflicts_with = "coco_results")]
    dets: Option<PathBuf>,
    /// Detections in COCO results format.
    #[arg(long)]
    coco_results: Option<PathBuf>,
    /// COCO ground truth the results refer to (defaults to the export of --gt).
    #[arg(long, requires = "coco_results")]
    coco_gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    task: TaskArg,
    /// Comma-separated thresholds (default 0.50:0.05:0.95).
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Per-node OKS constant, applied to all ten nodes.
    #[arg(long)]
    oks_k: Option<f64>,
    /// JSON report (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum MonitorCommand {
    /// Best checkpoint of a series CSV (`step,value`) or of every series in a monitor log.
    Best(BestArgs),
    /// Run a Stage-2 validation pass and append it to a monitor log.
    Validate(MonitorValidateArgs),
}

#[derive(Debug, Args)]
struct BestArgs {
    #[arg(long, required_unless_present = "log", conflicts_with = "log")]
    series: Option<PathBuf>,
    /// Metric name; also picks the default polarity.
    #[arg(long, default_value = "lpips")]
    metric: String,
    #[arg(long, value_parser = parse_serde::<Polarity>)]
    polarity: Option<Polarity>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonitorValidateArgs {
    /// Checkpoint tag.
    #[arg(long)]
    checkpoint: String,
    #[arg(long)]
    step: u64,
    /// Validation manifest.
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Comma-separated metric names (default: all).
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    #[arg(long)]
    provider: Option<PathBuf>,
    #[arg(long)]
    style: Option<PathBuf>,
    /// Monitor log (JSON), created if missing.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Debug, Args)]
struct PcaArgs {
    /// `label=manifest.json`, repeatable.
    #[arg(long = "set", required = true)]
    sets: Vec<String>,
    #[arg(long)]
    provider: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReviewServeArgs {
    /// Published review queue (JSON).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    queue: Option<PathBuf>,
    /// Build the queue from a manifest of generated images.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Gate decisions (JSON lines) to attach to the queue items.
    #[arg(long, requires = "manifest")]
    gate: Option<PathBuf>,
    #[arg(long, default_value = "review")]
    run_id: String,
    /// Write the built queue here before serving.
    #[arg(long, requires = "manifest")]
    save_queue: Option<PathBuf>,
    /// Directory record paths are relative to (defaults to the queue or manifest directory).
    #[arg(long)]
    image_root: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Verdict log (JSON lines); replayed on start.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Frontend files served for unmatched paths.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    #[arg(long)]
    style: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CocoExportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    lenient: LenientArgs,
}

/// Resolved globals.
struct Ctx {
    seed: u64,
    cfg: CliConfig,
}

impl Ctx {
    fn presets(&self, flag: &Option<PathBuf>) -> CliResult<Vec<CannyPreset>> {
        match flag.as_ref().or(self.cfg.presets.as_ref()) {
            Some(p) => Ok(load_presets(p)?),
            None => Ok(default_presets()),
        }
    }

    fn prompts(&self, flag: &Option<PathBuf>) -> CliResult<Option<PromptConfig>> {
        flag.as_ref()
            .or(self.cfg.prompts.as_ref())
            .map(load_prompt_config)
            .transpose()
            .map_err(CliError::from)
    }

    fn require_prompts(&self, flag: &Option<PathBuf>) -> CliResult<PromptConfig> {
        self.prompts(flag)?
            .ok_or_else(|| CliError::Usage("a prompt config is required (--prompts or `prompts` in --config)".into()))
    }

    fn style(&self, flag: &Option<PathBuf>) -> CliResult<PlotStyle> {
        let style = match flag.as_ref().or(self.cfg.style.as_ref()) {
            Some(p) => read_json::<PlotStyle>(p)?,
            None => PlotStyle::default(),
        };
        style.validate()?;
        Ok(style)
    }

    fn provider(&self, flag: &Option<PathBuf>) -> CliResult<(ProviderConfig, Box<dyn EmbeddingProvider>)> {
        let cfg = match flag {
            Some(p) => read_json::<ProviderConfig>(p)?,
            None => self.cfg.provider.clone().unwrap_or_default(),
        };
        let built = cfg.build()?;
        Ok((cfg, built))
    }

    fn parallelism(&self, flag: Option<usize>) -> usize {
        flag.or(self.cfg.parallelism).unwrap_or(DEFAULT_PARALLELISM).max(1)
    }

    fn service(&self, args: &ServiceArgs) -> CliResult<Box<dyn GenerationService>> {
        if let Some(spec) = &args.mock {
            return Ok(Box::new(MockGenerator::new(parse_mock(spec)?)));
        }
        match args.endpoint.as_ref().or(self.cfg.endpoint.as_ref()) {
            Some(url) => Ok(Box::new(HttpGenerationClient::new(
                url.clone(),
                Duration::from_secs(args.timeout_secs),
            )?)),
            None => Err(CliError::Usage(
                "a generation service is required (--endpoint, --mock or `endpoint` in --config)".into(),
            )),
        }
    }

    fn retry(&self, args: &ServiceArgs) -> CliResult<RetryPolicy> {
        if args.max_attempts == 0 {
            return Err(CliError::Usage("--max-attempts must be at least 1".into()));
        }
        Ok(RetryPolicy {
            max_attempts: args.max_attempts,
            ..RetryPolicy::default()
        })
    }
}

fn parse_mock(spec: &str) -> CliResult<MockMode> {
    match spec.split_once(':') {
        None if spec == "echo" || spec == "oracle" => Ok(MockMode::Echo),
        Some(("noise", a)) => a
            .parse::<u8>()
            .map(|amplitude| MockMode::NoiseOverlay { amplitude })
            .map_err(|_| CliError::Usage(format!("bad noise amplitude `{a}` (0..=255)"))),
        _ => Err(CliError::Usage(format!(
            "unknown mock `{spec}`; expected echo, noise:<amplitude> or oracle"
        ))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Writes to `path`, or to stdout without one.
fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Domain(format!("stdout: {e}")))
        }
    }
}

fn load_lenient(path: &Path) -> CliResult<DatasetManifest> {
    let opts = ValidationOptions {
        required_size: None,
        ..ValidationOptions::default()
    };
    Ok(load_manifest_with(path, &opts)?)
}

fn load_record_image(manifest_path: &Path, r: &ImageRecord) -> CliResult<RasterImage> {
    Ok(RasterImage::load_png(resolve_record_path(manifest_path, r))?)
}

/// Keeps record paths valid when a manifest derived from `from` is saved at `to`.
fn rebase(mut m: DatasetManifest, from: &Path, to: &Path) -> DatasetManifest {
    let dir = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
    if dir(from) == dir(to) {
        return m;
    }
    for r in &mut m.records {
        r.path = resolve_record_path(from, r).to_string_lossy().into_owned();
    }
    m
}

fn scale_annotations(anns: &[ShootAnnotation], sx: f64, sy: f64) -> Vec<ShootAnnotation> {
    anns.iter()
        .map(|a| {
            ShootAnnotation::new(
                BBox::new(a.bbox.x * sx, a.bbox.y * sy, a.bbox.w * sx, a.bbox.h * sy),
                a.keypoints
                    .iter()
                    .map(|k| Keypoint::new(k.index, k.x * sx, k.y * sy, k.visible))
                    .collect(),
            )
        })
        .collect()
}

fn png_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> CliResult {
    let out_dir = a.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let img_dir = out_dir.join("images");
    create_dir(&img_dir)?;
    let domain = DomainTag::new(
        a.domain.clone(),
        a.prompt_key.clone().unwrap_or_else(|| a.domain.clone()),
    );
    let size = a.size;
    let mut records = Vec::new();
    if let Some(n) = a.synthetic {
        let layout = LayoutParams {
            canvas_w: size,
            canvas_h: size,
            ..LayoutParams::default()
        };
        let lighting = match a.lighting {
            LightingArg::Day => SceneLighting::Day,
            LightingArg::Night => SceneLighting::Night,
        };
        for i in 0..n {
            let id = format!("syn-{i:05}");
            let seed = derive_seed(ctx.seed, &id);
            let anns = synth_layout(&layout, seed)?;
            let img = synth_scene(&anns, size, size, lighting, seed.rotate_left(1));
            let path = format!("images/{id}.png");
            img.save_png(out_dir.join(&path))?;
            records.push(ImageRecord {
                id,
                path,
                width: size,
                height: size,
                domain: domain.name.clone(),
                split: a.split,
                provenance: a.provenance,
                annotations: anns,
            });
        }
    } else {
        let src = a.images.as_deref().expect("clap requires --images");
        let sources: Vec<ImageRecord> = match &a.coco {
            Some(coco_path) => {
                let coco: CocoDataset = read_json(coco_path)?;
                let opts = CocoImportOptions {
                    domain: domain.clone(),
                    split: a.split,
                    provenance: a.provenance,
                };
                from_coco(&coco, &opts)?.records
            }
            None => png_files(src)?
                .iter()
                .map(|p| ImageRecord {
                    id: stem(p),
                    path: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                    width: 0,
                    height: 0,
                    domain: domain.name.clone(),
                    split: a.split,
                    provenance: a.provenance,
                    annotations: Vec::new(),
                })
                .collect(),
        };
        for mut r in sources {
            let img = RasterImage::load_png(src.join(&r.path))?;
            let (sx, sy) = (size as f64 / img.width() as f64, size as f64 / img.height() as f64);
            r.annotations = scale_annotations(&r.annotations, sx, sy);
            let img = if (img.width(), img.height()) == (size, size) {
                img
            } else {
                img.resized(size, size)
            };
            r.path = format!("images/{}.png", r.id);
            img.save_png(out_dir.join(&r.path))?;
            r.width = size;
            r.height = size;
            records.push(r);
        }
    }
    let m = DatasetManifest::new(vec![domain], records);
    validate_manifest(
        &m,
        &ValidationOptions {
            required_size: Some(size),
            ..ValidationOptions::default()
        },
    )?;
    save_manifest(&m, &a.out)?;
    log::info!("ingested {} records into {}", m.records.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ManifestSummary {
    records: usize,
    annotations: usize,
    domains: Vec<String>,
    by_split: BTreeMap<String, usize>,
    by_provenance: BTreeMap<String, usize>,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn validate(_ctx: &Ctx, a: &ValidateArgs) -> CliResult {
    let m = load_manifest_with(&a.manifest, &a.lenient.options())?;
    if a.check_files {
        for r in &m.records {
            let img = load_record_image(&a.manifest, r)?;
            if (img.width(), img.height()) != (r.width, r.height) {
                return Err(CliError::Domain(format!(
                    "record `{}`: file is {}x{}, manifest says {}x{}",
                    r.id,
                    img.width(),
                    img.height(),
                    r.width,
                    r.height
                )));
            }
        }
    }
    let mut s = ManifestSummary {
        records: m.records.len(),
        annotations: m.records.iter().map(|r| r.annotations.len()).sum(),
        domains: m.domains.iter().map(|d| d.name.clone()).collect(),
        by_split: BTreeMap::new(),
        by_provenance: BTreeMap::new(),
    };
    for r in &m.records {
        *s.by_split.entry(label(&r.split)).or_default() += 1;
        *s.by_provenance.entry(label(&r.provenance)).or_default() += 1;
    }
    emit(a.out.as_deref(), &pretty(&s)?)
}

fn split(ctx: &Ctx, a: &SplitArgs) -> CliResult {
    let m = load_lenient(&a.manifest)?;
    let (train, val) = split_manifest(&m, a.fraction, ctx.seed)?;
    save_manifest(&rebase(train, &a.manifest, &a.out_train), &a.out_train)?;
    save_manifest(&rebase(val, &a.manifest, &a.out_val), &a.out_val)?;
    Ok(())
}

fn plot(ctx: &Ctx, a: &PlotArgs) -> CliResult {
    let m = load_lenient(&a.manifest)?;
    let style = ctx.style(&a.style)?;
    create_dir(&a.out_dir)?;
    for r in &m.records {
        let img = render_annotation_plot(&r.annotations, r.width, r.height, &style)?;
        img.save_png(a.out_dir.join(format!("{}.png", r.id)))?;
        if a.flip {
            let (_, flipped) = hflip(None, &r.annotations, r.width)?;
            let img = render_annotation_plot(&flipped, r.width, r.height, &style)?;
            img.save_png(a.out_dir.join(format!("{}__flip.png", r.id)))?;
        }
    }
    Ok(())
}

fn canny_cmd(ctx: &Ctx, a: &CannyArgs) -> CliResult {
    let presets = ctx.presets(&a.presets)?;
    let preset = find_preset(&presets, &a.preset)?;
    if let (Some(input), Some(out)) = (&a.input, &a.out) {
        let img = RasterImage::load_png(input)?;
        return Ok(canny(&img, preset)?.save_png(out)?);
    }
    let (Some(mp), Some(out_dir)) = (&a.manifest, &a.out_dir) else {
        return Err(CliError::Usage("canny needs --in/--out or --manifest/--out-dir".into()));
    };
    let m = load_lenient(mp)?;
    create_dir(out_dir)?;
    for r in &m.records {
        let img = load_record_image(mp, r)?;
        canny(&img, preset)?.save_png(out_dir.join(format!("{}__{}.png", r.id, preset.name)))?;
    }
    Ok(())
}

fn read_id_list(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn augment(ctx: &Ctx, cmd: &AugmentCommand) -> CliResult {
    match cmd {
        AugmentCommand::Plans(a) => {
            let mut base = load_lenient(&a.manifest)?;
            if let Some(p) = &a.accepted {
                let keep: std::collections::BTreeSet<String> = read_id_list(p)?.into_iter().collect();
                base = base.filtered(|r| r.provenance != Provenance::Generated || keep.contains(&r.id));
            }
            let plans = build_plans(&base, ctx.seed)?;
            write_file(&a.out, pretty(&plans)?)?;
            if let Some(dir) = &a.manifests_dir {
                create_dir(dir)?;
                for p in &plans {
                    let out = dir.join(format!("plan_{}.json", p.label));
                    save_manifest(&rebase(p.training_manifest(&base)?, &a.manifest, &out), &out)?;
                }
            }
            Ok(())
        }
        AugmentCommand::Stage1(a) => {
            let pool = load_lenient(&a.manifest)?;
            let presets = ctx.presets(&a.presets)?;
            let prompts = ctx.prompts(&a.prompts)?;
            let pairs = if a.enumerate_only {
                let pairs = enumerate_stage1_pairs(&pool, &presets, prompts.as_ref())?;
                create_dir(&a.out_dir)?;
                let path = a.out_dir.join("pairs.jsonl");
                let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                write_pairs_jsonl(std::io::BufWriter::new(f), &pairs)?;
                pairs
            } else {
                materialize_stage1(
                    &pool,
                    &a.manifest,
                    &presets,
                    prompts.as_ref(),
                    &a.out_dir,
                    ctx.parallelism(a.parallelism),
                )?
            };
            emit(None, &format!("{{\"pairs\":{}}}\n", pairs.len()))
        }
    }
}

#[derive(Serialize)]
struct GenerateSummary<'a> {
    requested: usize,
    generated: usize,
    failed: Vec<&'a str>,
}

fn generate_cmd(ctx: &Ctx, a: &GenerateArgs) -> CliResult {
    let service = ctx.service(&a.service)?;
    if a.service.mock.as_deref() == Some("oracle") {
        return Err(CliError::Usage(
            "`--mock oracle` needs references and only works with `monitor validate`".into(),
        ));
    }
    let policy = ctx.retry(&a.service)?;
    let cond_dir = a.out_dir.join("conditioning");
    create_dir(&cond_dir)?;

    let (reqs, domains) = if let Some(log_path) = &a.replay {
        let f = fs::File::open(log_path).map_err(|e| io_err(log_path, e))?;
        let mut log = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| io_err(log_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: GenerationLogEntry = serde_json::from_str(&line)
                .map_err(|e| CliError::Domain(format!("{} line {}: {e}", log_path.display(), i + 1)))?;
            log.push(e);
        }
        let base = log_path.parent().unwrap_or(Path::new(""));
        let reqs = requests_from_log(&log, base)?;
        for r in &reqs {
            if let Some(p) = &r.conditioning_path {
                r.conditioning.save_png(a.out_dir.join(p))?;
            }
        }
        let mut names: Vec<String> = reqs.iter().map(|r| r.domain.clone()).collect();
        names.sort();
        names.dedup();
        let domains = names
            .into_iter()
            .map(|n| DomainTag::new(n.clone(), n))
            .collect::<Vec<_>>();
        (reqs, domains)
    } else {
        let mp = a.manifest.as_deref().expect("clap requires --manifest");
        let m = load_lenient(mp)?;
        let prompts = ctx.require_prompts(&a.prompts)?;
        let style = ctx.style(&a.style)?;
        let target = m.domain(&a.target_domain).cloned().unwrap_or_else(|| {
            DomainTag::new(
                a.target_domain.clone(),
                a.target_prompt_key.clone().unwrap_or_else(|| a.target_domain.clone()),
            )
        });
        let prompt = crate::dataset::compose_prompt(&prompts, &target)?;
        if a.per_record == 0 {
            return Err(CliError::Usage("--per-record must be at least 1".into()));
        }
        let mut reqs = Vec::new();
        for r in &m.records {
            if (r.width, r.height) != (CONDITIONING_SIZE, CONDITIONING_SIZE) {
                return Err(CliError::Domain(format!(
                    "record `{}` is {}x{}; generation needs {CONDITIONING_SIZE}x{CONDITIONING_SIZE}",
                    r.id, r.width, r.height
                )));
            }
            let plot = render_annotation_plot(&r.annotations, r.width, r.height, &style)?;
            for k in 0..a.per_record {
                let id = if a.per_record == 1 {
                    format!("gen-{}", r.id)
                } else {
                    format!("gen-{}-{k}", r.id)
                };
                let rel = format!("conditioning/{id}.png");
                plot.save_png(a.out_dir.join(&rel))?;
                reqs.push(GenerationRequest {
                    seed: derive_seed(ctx.seed, &id),
                    id,
                    conditioning: plot.clone(),
                    conditioning_path: Some(rel),
                    prompt: prompt.clone(),
                    domain: target.name.clone(),
                    source_id: Some(r.id.clone()),
                    source_annotations: r.annotations.clone(),
                });
            }
        }
        (reqs, vec![target])
    };

    let out = generate_batch(
        service.as_ref(),
        &reqs,
        &a.out_dir,
        &policy,
        ctx.parallelism(a.parallelism),
    );
    let manifest = DatasetManifest::new(domains, out.records.clone());
    save_manifest(&manifest, a.out_dir.join("generated.json"))?;
    let mut log = String::new();
    for e in &out.log {
        log.push_str(&serde_json::to_string(e)?);
        log.push('\n');
    }
    write_file(&a.out_dir.join("generation_log.jsonl"), log)?;
    let mut run = RunManifest::new("generate", ctx.seed);
    run.service_endpoint = Some(service.endpoint());
    run.member_ids = out.records.iter().map(|r| r.id.clone()).collect();
    run.seeds = reqs.iter().map(|r| (r.id.clone(), r.seed)).collect();
    run.save(a.out_dir.join("run.json"))?;

    let summary = GenerateSummary {
        requested: reqs.len(),
        generated: out.records.len(),
        failed: out.failed_ids(),
    };
    emit(None, &pretty(&summary)?)?;
    if summary.generated == 0 && summary.requested > 0 {
        let first = out.log.iter().find(|e| e.status == GenerationStatus::Failed);
        return Err(CliError::Domain(format!(
            "all {} generation requests failed; first error: {}",
            summary.requested,
            first.and_then(|e| e.error.as_deref()).unwrap_or("unknown")
        )));
    }
    Ok(())
}

fn embed_records(
    provider: &dyn EmbeddingProvider,
    manifest_path: &Path,
    records: &[&ImageRecord],
) -> CliResult<FeatureSet> {
    let mut ids = Vec::with_capacity(records.len());
    let mut vectors = Vec::with_capacity(records.len());
    for r in records {
        vectors.push(provider.embed(&load_record_image(manifest_path, r)?)?);
        ids.push(r.id.clone());
    }
    Ok(FeatureSet::new(provider.name(), ids, vectors)?)
}

#[derive(Serialize)]
struct SelectSummary {
    target_size: usize,
    candidates: usize,
    median_pairwise: f64,
    accepted: usize,
    rejected: usize,
    accept_rate: f64,
}

fn select(ctx: &Ctx, a: &SelectArgs) -> CliResult {
    let (_, provider) = ctx.provider(&a.provider)?;
    let tm = load_lenient(&a.target)?;
    let target_records: Vec<&ImageRecord> = tm
        .records
        .iter()
        .filter(|r| a.target_domain.as_ref().is_none_or(|d| &r.domain == d))
        .collect();
    if target_records.len() < 2 {
        return Err(CliError::Domain(format!(
            "the target set needs |D| >= 2 images to define a median pairwise distance, got {}",
            target_records.len()
        )));
    }
    let target = embed_records(provider.as_ref(), &a.target, &target_records)?;
    let candidates = if a.candidates.is_dir() {
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for p in png_files(&a.candidates)? {
            vectors.push(provider.embed(&RasterImage::load_png(&p)?)?);
            ids.push(stem(&p));
        }
        FeatureSet::new(provider.name(), ids, vectors)?
    } else {
        let cm = load_lenient(&a.candidates)?;
        embed_records(provider.as_ref(), &a.candidates, &cm.records.iter().collect::<Vec<_>>())?
    };
    let gate = gate_batch(&target, &candidates, a.metric)?;
    let mut lines = String::new();
    for d in &gate.decisions {
        lines.push_str(&serde_json::to_string(d)?);
        lines.push('\n');
    }
    emit(a.out.as_deref(), &lines)?;
    if let Some(p) = &a.accepted_out {
        let ids: String = gate.accepted_ids().map(|id| format!("{id}\n")).collect();
        write_file(p, ids)?;
    }
    if a.out.is_some() {
        let s = SelectSummary {
            target_size: target.len(),
            candidates: candidates.len(),
            median_pairwise: gate.median_pairwise,
            accepted: gate.accepted,
            rejected: gate.rejected,
            accept_rate: gate.accept_rate(),
        };
        emit(None, &pretty(&s)?)?;
    }
    Ok(())
}

fn load_gate_jsonl(path: &Path) -> CliResult<BatchGate> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut decisions = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let d: GateDecision = serde_json::from_str(line)
            .map_err(|e| CliError::Domain(format!("{} line {}: {e}", path.display(), i + 1)))?;
        decisions.push(d);
    }
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    Ok(BatchGate {
        median_pairwise: decisions.first().map_or(0.0, |d| d.median_pairwise),
        rejected: decisions.len() - accepted,
        accepted,
        decisions,
    })
}

fn eval_cmd(_ctx: &Ctx, a: &EvalArgs) -> CliResult {
    let gt = load_lenient(&a.gt)?;
    let dets = match (&a.dets, &a.coco_results) {
        (Some(p), _) => load_detections_jsonl(p)?,
        (None, Some(p)) => {
            let coco = match &a.coco_gt {
                Some(g) => read_json::<CocoDataset>(g)?,
                None => to_coco(&gt),
            };
            load_coco_results(p, &coco)?
        }
        (None, None) => return Err(CliError::Usage("eval needs --dets or --coco-results".into())),
    };
    let thresholds = a.thresholds.clone().unwrap_or_else(default_thresholds);
    let oks = match a.oks_k {
        Some(k) => OksParams {
            k_per_class: vec![k; OksParams::default().k_per_class.len()],
        },
        None => OksParams::default(),
    };
    let tasks: &[Task] = match a.task {
        TaskArg::Bbox => &[Task::BBox],
        TaskArg::Keypoint => &[Task::Keypoint],
        TaskArg::All => &[Task::BBox, Task::Keypoint],
    };
    let reports = tasks
        .iter()
        .map(|t| map_report(&dets, &gt, *t, &thresholds, &oks))
        .collect::<Result<Vec<EvalReport>, _>>()?;
    let json = if reports.len() == 1 {
        pretty(&reports[0])?
    } else {
        pretty(&reports)?
    };
    emit(a.out.as_deref(), &json)?;
    if let Some(p) = &a.csv {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &reports)?;
        write_file(p, buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BestStep {
    metric: String,
    polarity: Polarity,
    best_step: u64,
    value: f64,
}

#[derive(Serialize)]
struct MonitorValidateOutput<'a> {
    report: &'a crate::pipeline::Stage2Report,
    /// Metrics whose value could not enter a series (non-finite).
    skipped: Vec<String>,
    best_steps: BTreeMap<String, u64>,
}

fn monitor(ctx: &Ctx, cmd: &MonitorCommand) -> CliResult {
    match cmd {
        MonitorCommand::Best(a) => {
            if let Some(p) = &a.log {
                let log: MonitorLog = read_json(p)?;
                return emit(None, &pretty(&log.best_steps())?);
            }
            let path = a.series.as_deref().expect("clap requires --series");
            let polarity = a.polarity.unwrap_or_else(|| Polarity::for_metric(&a.metric));
            let s = load_series_csv(path, &a.metric, polarity)?;
            let best_step = select_best_checkpoint(&s)?;
            let value = s
                .points
                .iter()
                .find(|p| p.step == best_step)
                .map_or(f64::NAN, |p| p.value);
            emit(
                None,
                &pretty(&BestStep {
                    metric: a.metric.clone(),
                    polarity,
                    best_step,
                    value,
                })?,
            )
        }
        MonitorCommand::Validate(a) => {
            let val = load_lenient(&a.val)?;
            let prompts = ctx.require_prompts(&a.prompts)?;
            let style = ctx.style(&a.style)?;
            let (_, provider) = ctx.provider(&a.provider)?;
            let metrics = match &a.metrics {
                Some(names) => names
                    .iter()
                    .map(|n| {
                        n.parse::<ValidationMetric>()
                            .map_err(|e| CliError::Usage(e.to_string()))
                    })
                    .collect::<CliResult<Vec<_>>>()?,
                None => ValidationMetric::ALL.to_vec(),
            };
            let items = val
                .records
                .iter()
                .map(|r| {
                    Ok(ValidationItem {
                        record: r.clone(),
                        reference: load_record_image(&a.val, r)?,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            let service: Box<dyn GenerationService> = if a.service.mock.as_deref() == Some("oracle") {
                let mut mock = MockGenerator::echo();
                for it in &items {
                    let r = &it.record;
                    let png = render_annotation_plot(&r.annotations, r.width, r.height, &style)?.encode_png()?;
                    mock.add_reference(&png, it.reference.clone());
                }
                Box::new(mock)
            } else {
                ctx.service(&a.service)?
            };
            let cfg = Stage2Config {
                prompts: &prompts,
                style: &style,
                provider: provider.as_ref(),
                metrics,
                seed: ctx.seed,
                retry: ctx.retry(&a.service)?,
            };
            let report = stage2_validation_pass(&a.checkpoint, a.step, &val, &items, service.as_ref(), &cfg)?;
            let mut log: MonitorLog = if a.log.exists() {
                read_json(&a.log)?
            } else {
                MonitorLog::default()
            };
            let skipped = report.append_to(&mut log)?;
            write_file(&a.log, pretty(&log)?)?;
            let out = MonitorValidateOutput {
                report: &report,
                skipped,
                best_steps: log.best_steps(),
            };
            emit(a.out.as_deref(), &pretty(&out)?)
        }
    }
}

#[derive(Serialize)]
struct PcaSummary {
    n: usize,
    explained_variance_ratio: Vec<f64>,
    warnings: Vec<String>,
}

fn pca(ctx: &Ctx, a: &PcaArgs) -> CliResult {
    let (_, provider) = ctx.provider(&a.provider)?;
    let mut all: Option<FeatureSet> = None;
    let mut labels = Vec::new();
    for spec in &a.sets {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects label=manifest, got `{spec}`")))?;
        let path = Path::new(path);
        let m = load_lenient(path)?;
        let set = embed_records(provider.as_ref(), path, &m.records.iter().collect::<Vec<_>>())?;
        labels.extend(std::iter::repeat_n(label.to_string(), set.len()));
        match all.as_mut() {
            Some(acc) => acc.extend(&set)?,
            None => all = Some(set),
        }
    }
    let all = all.ok_or_else(|| CliError::Usage("pca needs at least one --set".into()))?;
    let p = pca_project(&all, a.k)?;
    let mut buf = Vec::new();
    write_pca_csv(&mut buf, &p, &labels)?;
    write_file(&a.out, buf)?;
    emit(
        None,
        &pretty(&PcaSummary {
            n: all.len(),
            explained_variance_ratio: p.explained_variance_ratio.clone(),
            warnings: p.warnings.clone(),
        })?,
    )
}

fn review_serve(ctx: &Ctx, a: &ReviewServeArgs) -> CliResult {
    let (queue, default_root) = match (&a.queue, &a.manifest) {
        (Some(q), _) => (ReviewQueue::load(q)?, q.parent().map(Path::to_path_buf)),
        (None, Some(mp)) => {
            let m = load_lenient(mp)?;
            let gate = a.gate.as_deref().map(load_gate_jsonl).transpose()?;
            let q = ReviewQueue::from_manifest(a.run_id.clone(), &m, gate.as_ref());
            if let Some(p) = &a.save_queue {
                q.save(p)?;
            }
            (q, mp.parent().map(Path::to_path_buf))
        }
        (None, None) => return Err(CliError::Usage("review-serve needs --queue or --manifest".into())),
    };
    let root = a.image_root.clone().or(default_root).unwrap_or_default();
    let state = Arc::new(ReviewState::new(queue, root, a.log.as_deref(), ctx.style(&a.style)?)?);
    let router = review_router(state.clone(), a.static_dir.as_deref());
    crate::http::serve_until_ctrl_c(router, a.bind, |addr| {
        println!("review api listening on http://{addr}");
    })
    .map_err(|e| CliError::Domain(format!("serve on {}: {e}", a.bind)))?;
    state.flush()?;
    Ok(())
}

fn coco_export(_ctx: &Ctx, a: &CocoExportArgs) -> CliResult {
    let m = load_manifest_with(&a.manifest, &a.lenient.options())?;
    write_file(&a.out, pretty(&to_coco(&m))?)
}

fn dispatch(ctx: &Ctx, cmd: &Command) -> CliResult {
    match cmd {
        Command::Ingest(a) => ingest(ctx, a),
        Command::Validate(a) => validate(ctx, a),
        Command::Split(a) => split(ctx, a),
        Command::Plot(a) => plot(ctx, a),
        Command::Canny(a) => canny_cmd(ctx, a),
        Command::Augment(c) => augment(ctx, c),
        Command::Generate(a) => generate_cmd(ctx, a),
        Command::Select(a) => select(ctx, a),
        Command::Eval(a) => eval_cmd(ctx, a),
        Command::Monitor(c) => monitor(ctx, c),
        Command::Pca(a) => pca(ctx, a),
        Command::ReviewServe(a) => review_serve(ctx, a),
        Command::CocoExport(a) => coco_export(ctx, a),
    }
}

fn report_error(e: &CliError, json: bool) {
    if json {
        let body = serde_json::json!({
            "error": e.to_string(),
            "kind": e.kind(),
            "exit_code": e.exit_code(),
        });
        eprintln!("{body}");
    } else {
        eprintln!("error: {e}");
    }
}

/// Runs one invocation. `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().skip(1).any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            if json_errors {
                report_error(&CliError::Usage(e.render().to_string().trim_end().to_string()), true);
            } else {
                let _ = e.print();
            }
            return 2;
        }
    };
    let result = (|| {
        let cfg = match &cli.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        let level = cfg.log_level.clone().unwrap_or_else(|| "warn".into());
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
        let ctx = Ctx {
            seed: cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            cfg,
        };
        dispatch(&ctx, &cli.command)
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e, cli.json_errors);
            e.exit_code()
        }
    }
}
