//! Image buffers, annotation-plotted conditioning images, annotation-aware
//! flipping, synthetic annotation layouts and stand-in scenes.

mod flip;
mod image;
mod layout;
mod plot;
mod scene;

pub use self::image::{luma, RasterImage};
pub use flip::hflip;
pub use layout::{synth_layout, LayoutParams};
pub use plot::{draw_annotations, render_annotation_plot, Color, PlotStyle};
pub use scene::{synth_scene, SceneLighting};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("channel count {0} unsupported (expected 1 or 3)")]
    Channels(u8),
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("plot style: {0}")]
    Style(String),
    #[error("infeasible layout: {0}")]
    Layout(String),
    #[error("image codec: {0}")]
    Codec(#[from] ::image::ImageError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
