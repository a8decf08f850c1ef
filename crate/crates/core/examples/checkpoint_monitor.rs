//! Validate a few checkpoints against a mock service and pick the best one.

use d4::dataset::{compose_prompt, DatasetManifest, DomainTag, ImageRecord, PromptConfig, Provenance, Split};
use d4::iqa::BuiltinDescriptor;
use d4::pipeline::{
    stage2_validation_pass, MockGenerator, MockMode, MonitorLog, RetryPolicy, Stage2Config, ValidationItem,
    ValidationMetric,
};
use d4::raster::{synth_layout, synth_scene, LayoutParams, PlotStyle, SceneLighting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<_> = (0..6)
        .map(|i| ImageRecord {
            id: format!("val-{i}"),
            path: format!("val-{i}.png"),
            width: 256,
            height: 256,
            domain: "night".into(),
            split: Split::Val,
            provenance: Provenance::Real,
            annotations: synth_layout(
                &LayoutParams {
                    canvas_w: 256,
                    canvas_h: 256,
                    ..LayoutParams::default()
                },
                i,
            )
            .unwrap(),
        })
        .collect();
    let items: Vec<_> = records
        .iter()
        .map(|r| ValidationItem {
            reference: synth_scene(&r.annotations, 256, 256, SceneLighting::Night, 1),
            record: r.clone(),
        })
        .collect();
    let val = DatasetManifest::new(vec![DomainTag::new("night", "night")], records);
    let prompts = PromptConfig {
        common: "vineyard rows".into(),
        per_domain: [("night".to_string(), "Nighttime shooting".to_string())].into(),
    };
    println!("prompt: {}", compose_prompt(&prompts, &val.domains[0])?);

    let cfg = Stage2Config {
        prompts: &prompts,
        style: &PlotStyle::default(),
        provider: &BuiltinDescriptor,
        metrics: vec![
            ValidationMetric::Ssim,
            ValidationMetric::CroppedPsnr,
            ValidationMetric::EmbedDistance,
        ],
        seed: 212,
        retry: RetryPolicy::default(),
    };
    // Later checkpoints sit closer to the originals: less noise on top.
    let mut log = MonitorLog::default();
    for (step, amplitude) in [(1000u64, 60u8), (2000, 30), (3000, 10), (4000, 25)] {
        let mut service = MockGenerator::new(MockMode::NoiseOverlay { amplitude });
        for it in &items {
            let plot = d4::raster::render_annotation_plot(&it.record.annotations, 256, 256, cfg.style)?;
            service.add_reference(&plot.encode_png()?, it.reference.clone());
        }
        let report = stage2_validation_pass(&format!("ckpt-{step}"), step, &val, &items, &service, &cfg)?;
        for m in &report.metrics {
            println!("step {step:>5} {:<16} {:.4}", m.metric_name, m.value);
        }
        report.append_to(&mut log)?;
    }
    for (metric, step) in log.best_steps() {
        println!("best {metric}: step {step}");
    }
    Ok(())
}
