//! Serve the mock generator over HTTP and drive it with the real client.
//!
//! `cargo run --example mock_generation_server -- serve 127.0.0.1:7860`
//! keeps the server up for use with `d4 generate --endpoint`.

use std::time::Duration;

use d4::http::{serve_until_ctrl_c, spawn_server};
use d4::pipeline::{
    generate_batch, mock_router, GenerationRequest, HttpGenerationClient, MockGenerator, MockMode, RetryPolicy,
};
use d4::raster::{render_annotation_plot, synth_layout, LayoutParams, PlotStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mock = MockGenerator::new(MockMode::NoiseOverlay { amplitude: 12 });
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("serve") {
        let addr = args.get(2).map_or("127.0.0.1:7860", String::as_str).parse()?;
        serve_until_ctrl_c(mock_router(mock), addr, |a| println!("mock generator on http://{a}"))?;
        return Ok(());
    }

    let server = spawn_server(mock_router(mock), "127.0.0.1:0".parse()?)?;
    let client = HttpGenerationClient::new(server.url(), Duration::from_secs(30))?;
    let reqs: Vec<_> = (0..4)
        .map(|i| {
            let anns = synth_layout(&LayoutParams::default(), i).unwrap();
            GenerationRequest {
                id: format!("gen-{i}"),
                conditioning: render_annotation_plot(&anns, 512, 512, &PlotStyle::default()).unwrap(),
                conditioning_path: None,
                prompt: "vineyard rows, Daytime shooting".into(),
                seed: i,
                domain: "day".into(),
                source_id: Some(format!("night-{i}")),
                source_annotations: anns,
            }
        })
        .collect();
    let out_dir = std::env::temp_dir().join("d4-generation-example");
    let batch = generate_batch(&client, &reqs, &out_dir, &RetryPolicy::default(), 2);
    for e in &batch.log {
        println!(
            "{} {:?} after {} attempt(s) {}",
            e.id,
            e.status,
            e.attempts,
            e.error.as_deref().unwrap_or("")
        );
    }
    println!("{} records written under {}", batch.records.len(), out_dir.display());
    server.shutdown()?;
    Ok(())
}
