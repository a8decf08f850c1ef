//! Build a small synthetic manifest, validate it from disk and split it.

use d4::dataset::{
    load_manifest, save_manifest, split_manifest, DatasetManifest, DomainTag, ImageRecord, Provenance, Split,
};
use d4::raster::{synth_layout, LayoutParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = (0..20)
        .map(|i| ImageRecord {
            id: format!("night-{i:03}"),
            path: format!("images/night-{i:03}.png"),
            width: 512,
            height: 512,
            domain: "night".into(),
            split: Split::Train,
            provenance: Provenance::Real,
            annotations: synth_layout(&LayoutParams::default(), i).unwrap(),
        })
        .collect();
    let m = DatasetManifest::new(vec![DomainTag::new("night", "night")], records);

    let dir = std::env::temp_dir().join("d4-manifest-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("night.json");
    save_manifest(&m, &path)?;
    let loaded = load_manifest(&path)?;
    assert_eq!(loaded, m);

    let (train, val) = split_manifest(&loaded, 0.8, 212)?;
    println!(
        "{} records -> {} train / {} val",
        m.records.len(),
        train.records.len(),
        val.records.len()
    );
    println!(
        "val ids: {:?}",
        val.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>()
    );
    Ok(())
}
