//! Edge maps of one synthetic scene under each default preset.

use d4::edge::{canny_stages, default_presets};
use d4::raster::{synth_layout, synth_scene, LayoutParams, SceneLighting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let anns = synth_layout(&LayoutParams::default(), 3)?;
    let scene = synth_scene(&anns, 512, 512, SceneLighting::Night, 3);
    let dir = std::env::temp_dir().join("d4-canny-example");
    std::fs::create_dir_all(&dir)?;
    for p in default_presets() {
        let stages = canny_stages(&scene, &p)?;
        println!(
            "{:<8} sigma {:.1} thresholds {:>5.1}/{:<5.1} -> {} edge pixels",
            p.name,
            p.gaussian_sigma,
            p.low_threshold,
            p.high_threshold,
            stages.edge_count()
        );
        stages.edges.save_png(dir.join(format!("{}.png", p.name)))?;
    }
    Ok(())
}
