//! Start the review API on a gated batch, post verdicts and export.
//!
//! Pass `serve` to keep it running for the browser front end.

use std::sync::Arc;

use d4::dataset::{save_manifest, DatasetManifest, DomainTag, ImageRecord, Provenance, Split};
use d4::http::{serve_until_ctrl_c, spawn_server};
use d4::raster::{synth_layout, synth_scene, LayoutParams, PlotStyle, SceneLighting};
use d4::review::{review_router, ReviewQueue, ReviewState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("d4-review-example");
    std::fs::create_dir_all(&dir)?;
    let mut records = Vec::new();
    for i in 0..4u64 {
        let anns = synth_layout(&LayoutParams::default(), i)?;
        let id = format!("gen-{i}");
        synth_scene(&anns, 512, 512, SceneLighting::Day, i).save_png(dir.join(format!("{id}.png")))?;
        records.push(ImageRecord {
            path: format!("{id}.png"),
            id,
            width: 512,
            height: 512,
            domain: "day".into(),
            split: Split::Pool,
            provenance: Provenance::Generated,
            annotations: anns,
        });
    }
    let m = DatasetManifest::new(vec![DomainTag::new("day", "day")], records);
    save_manifest(&m, dir.join("generated.json"))?;
    let queue = ReviewQueue::from_manifest("example", &m, None);
    let log = dir.join("verdicts.jsonl");
    let _ = std::fs::remove_file(&log);
    let state = Arc::new(ReviewState::new(queue, &dir, Some(&log), PlotStyle::default())?);

    if std::env::args().nth(1).as_deref() == Some("serve") {
        serve_until_ctrl_c(review_router(state, None), "127.0.0.1:8080".parse()?, |a| {
            println!("review api listening on http://{a}")
        })?;
        return Ok(());
    }

    let server = spawn_server(review_router(state.clone(), None), "127.0.0.1:0".parse()?)?;
    let client = reqwest::blocking::Client::new();
    let url = server.url();
    println!("queue: {}", client.get(format!("{url}/queue")).send()?.text()?.len());
    for (i, accepted) in [true, true, false, true].into_iter().enumerate() {
        let body = serde_json::json!({
            "image_id": format!("gen-{i}"),
            "accepted": accepted,
            "reasons": if accepted { vec![] } else { vec!["annotation_mismatch"] },
            "reviewer": "example",
        });
        let r = client.post(format!("{url}/verdict")).json(&body).send()?;
        println!("verdict gen-{i}: {}", r.status());
    }
    let export: DatasetManifest = client.get(format!("{url}/export?filter=accepted")).send()?.json()?;
    println!(
        "accepted: {:?}",
        export.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>()
    );
    server.shutdown()?;
    state.flush()?;
    println!("verdict log at {}", log.display());
    Ok(())
}
