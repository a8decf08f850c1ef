//! Full-reference and distribution metrics on synthetic images.

use d4::iqa::{
    cropped_fr_score, embed_set, fid_report, kid_report, psnr, ssim, BuiltinDescriptor, FrMetric, SsimParams,
};
use d4::pipeline::{GenerationService, MockGenerator, MockMode};
use d4::raster::{synth_layout, synth_scene, LayoutParams, RasterImage, SceneLighting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let noisy = MockGenerator::new(MockMode::NoiseOverlay { amplitude: 20 });
    let mut reals = Vec::new();
    let mut fakes = Vec::new();
    for i in 0..12 {
        let anns = synth_layout(
            &LayoutParams {
                canvas_w: 256,
                canvas_h: 256,
                ..LayoutParams::default()
            },
            i,
        )?;
        let real = synth_scene(&anns, 256, 256, SceneLighting::Day, i);
        let fake = RasterImage::decode_png(&noisy.generate_png(&real.encode_png()?, "p", i)?)?;
        if i == 0 {
            println!("psnr {:.2} dB", psnr(&real, &fake)?);
            println!("ssim {:.4}", ssim(&real, &fake, &SsimParams::default())?);
            let cropped = cropped_fr_score(&real, &fake, &anns, FrMetric::Psnr)?;
            println!("cropped psnr {:.2} dB over {} boxes", cropped.value, anns.len());
        }
        reals.push((format!("r{i}"), real));
        fakes.push((format!("f{i}"), fake));
    }
    let provider = BuiltinDescriptor;
    let a = embed_set(&provider, reals.iter().map(|(id, img)| (id.clone(), img)))?;
    let b = embed_set(&provider, fakes.iter().map(|(id, img)| (id.clone(), img)))?;
    for r in [fid_report(&a, &b)?, kid_report(&a, &b)?] {
        println!("{}", r.to_json_line());
    }
    Ok(())
}
