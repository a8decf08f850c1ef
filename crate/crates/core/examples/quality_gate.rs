//! The median-distance gate: keep candidates that sit closer to the target
//! set than its members typically sit to each other.

use d4::iqa::{embed_set, BuiltinDescriptor};
use d4::raster::{synth_layout, synth_scene, LayoutParams, RasterImage, SceneLighting};
use d4::selection::{gate_batch, DistanceMetric};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = |i: u64, light| synth_scene(&synth_layout(&LayoutParams::default(), i).unwrap(), 256, 256, light, i);
    let target: Vec<_> = (0..10)
        .map(|i| (format!("day-{i}"), scene(i, SceneLighting::Day)))
        .collect();
    let mut candidates: Vec<(String, RasterImage)> = (20..25)
        .map(|i| (format!("gen-day-{i}"), scene(i, SceneLighting::Day)))
        .collect();
    candidates.extend((30..35).map(|i| (format!("gen-night-{i}"), scene(i, SceneLighting::Night))));
    candidates.push(("gen-blank".into(), RasterImage::filled_rgb(256, 256, [255, 0, 255])));

    let p = BuiltinDescriptor;
    let t = embed_set(&p, target.iter().map(|(id, img)| (id.clone(), img)))?;
    let c = embed_set(&p, candidates.iter().map(|(id, img)| (id.clone(), img)))?;
    let gate = gate_batch(&t, &c, DistanceMetric::Cosine)?;
    println!("median pairwise distance {:.4}", gate.median_pairwise);
    for d in &gate.decisions {
        let verdict = if d.accepted { "keep" } else { "drop" };
        println!(
            "{verdict} {:<14} nearest {} at {:.4}",
            d.image_id, d.nearest_id, d.nearest_distance
        );
    }
    println!("accepted {}/{}", gate.accepted, gate.decisions.len());
    Ok(())
}
