//! Training plans over a base set of 50 images and the stage-1 pair count.

use d4::dataset::{DatasetManifest, DomainTag, ImageRecord, Provenance, Split};
use d4::edge::default_presets;
use d4::pipeline::{build_plans, enumerate_stage1_pairs};

fn record(id: String, domain: &str, split: Split, provenance: Provenance) -> ImageRecord {
    ImageRecord {
        path: format!("{id}.png"),
        id,
        width: 512,
        height: 512,
        domain: domain.into(),
        split,
        provenance,
        annotations: vec![],
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut records: Vec<_> = (0..50)
        .map(|i| record(format!("real-{i:02}"), "night", Split::Train, Provenance::Real))
        .collect();
    records.extend((0..10).map(|i| record(format!("val-{i:02}"), "night", Split::Val, Provenance::Real)));
    // Style-transferred copies of the real images.
    records.extend((0..50).map(|i| record(format!("st-{i:02}"), "day", Split::Train, Provenance::Transferred)));
    records.extend((0..10).map(|i| record(format!("st-val-{i:02}"), "day", Split::Val, Provenance::Transferred)));
    records.extend((0..1000).map(|i| record(format!("gen-{i:04}"), "day", Split::Pool, Provenance::Generated)));
    let base = DatasetManifest::new(
        vec![DomainTag::new("night", "night"), DomainTag::new("day", "day")],
        records,
    );

    for plan in build_plans(&base, 212)? {
        println!(
            "plan {}: {:>4} images ({} generated), validation {:?}",
            plan.label, plan.target_total, plan.generated_count, plan.validation
        );
    }

    let pool = base.filtered(|r| r.provenance == Provenance::Real && r.split == Split::Train);
    let pairs = enumerate_stage1_pairs(&pool, &default_presets(), None)?;
    println!(
        "{} real training images x 4 presets x 2 orientations = {} pairs",
        pool.records.len(),
        pairs.len()
    );
    Ok(())
}
