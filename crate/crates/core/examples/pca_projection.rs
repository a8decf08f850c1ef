//! Project real and generated embeddings onto two principal components.

use d4::iqa::{embed_set, BuiltinDescriptor, FeatureSet};
use d4::pipeline::{pca_project, write_pca_csv};
use d4::raster::{synth_layout, synth_scene, LayoutParams, SceneLighting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = BuiltinDescriptor;
    let mut labels = Vec::new();
    let mut all: Option<FeatureSet> = None;
    for (label, light, offset) in [("night", SceneLighting::Night, 0u64), ("day", SceneLighting::Day, 100)] {
        let imgs: Vec<_> = (0..15)
            .map(|i| {
                let anns = synth_layout(&LayoutParams::default(), offset + i).unwrap();
                (format!("{label}-{i}"), synth_scene(&anns, 256, 256, light, offset + i))
            })
            .collect();
        let set = embed_set(&p, imgs.iter().map(|(id, img)| (id.clone(), img)))?;
        labels.extend(std::iter::repeat_n(label.to_string(), set.len()));
        match &mut all {
            Some(a) => a.extend(&set)?,
            None => all = Some(set),
        }
    }
    let proj = pca_project(&all.unwrap(), 2)?;
    println!("explained variance ratio {:?}", proj.explained_variance_ratio);
    let mut out = Vec::new();
    write_pca_csv(&mut out, &proj, &labels)?;
    for line in String::from_utf8(out)?.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
