//! Box and keypoint mAP of a simulated detector at several noise levels.

use d4::dataset::{DatasetManifest, DomainTag, ImageRecord, Provenance, Split};
use d4::eval::{default_thresholds, map_report, simulate_detections, DetectorSim, OksParams, Task};
use d4::raster::{synth_layout, LayoutParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = (0..30)
        .map(|i| ImageRecord {
            id: format!("test-{i:02}"),
            path: format!("test-{i:02}.png"),
            width: 512,
            height: 512,
            domain: "night".into(),
            split: Split::Test,
            provenance: Provenance::Real,
            annotations: synth_layout(&LayoutParams::default(), 100 + i).unwrap(),
        })
        .collect();
    let gt = DatasetManifest::new(vec![DomainTag::new("night", "night")], records);

    println!("{:>6} {:>8} {:>8} {:>8}", "jitter", "box mAP", "box@50", "kp mAP");
    for jitter in [0.0, 2.0, 5.0, 10.0] {
        let sim = DetectorSim {
            box_jitter: jitter,
            keypoint_jitter: jitter,
            ..DetectorSim::default()
        };
        let dets = simulate_detections(&gt, &sim, 1);
        let bbox = map_report(&dets, &gt, Task::BBox, &default_thresholds(), &OksParams::default())?;
        let kp = map_report(&dets, &gt, Task::Keypoint, &default_thresholds(), &OksParams::default())?;
        println!("{jitter:>6.1} {:>8.4} {:>8.4} {:>8.4}", bbox.map, bbox.map50, kp.map);
    }
    Ok(())
}
