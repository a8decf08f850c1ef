//! Render an annotation plot and its mirrored twin.

use d4::raster::{hflip, render_annotation_plot, synth_layout, LayoutParams, PlotStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let anns = synth_layout(&LayoutParams::default(), 7)?;
    let style = PlotStyle::default();
    let plot = render_annotation_plot(&anns, 512, 512, &style)?;

    let (flipped_plot, flipped) = hflip(Some(&plot), &anns, 512)?;
    let flipped_plot = flipped_plot.unwrap();
    // Rendering the mirrored annotations gives the mirrored plot.
    assert_eq!(render_annotation_plot(&flipped, 512, 512, &style)?, flipped_plot);

    let dir = std::env::temp_dir().join("d4-plot-example");
    std::fs::create_dir_all(&dir)?;
    plot.save_png(dir.join("plot.png"))?;
    flipped_plot.save_png(dir.join("plot__flip.png"))?;
    println!(
        "{} shoots, first box {:?} -> {:?}",
        anns.len(),
        anns[0].bbox,
        flipped[0].bbox
    );
    println!("wrote {}", dir.display());
    Ok(())
}
