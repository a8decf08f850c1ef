use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RasterError, RasterImage};
use crate::dataset::{ShootAnnotation, MAX_KEYPOINTS};

pub type Color = [u8; 3];

/// How annotations are drawn into conditioning images and review overlays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotStyle {
    pub background: Color,
    pub bbox_color: Color,
    pub bbox_thickness: u32,
    /// Node index (1..=10) to disc color.
    pub node_color_by_index: BTreeMap<u8, Color>,
    pub node_radius: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            background: [0, 0, 0],
            bbox_color: [255, 255, 255],
            bbox_thickness: 2,
            node_color_by_index: (1..=MAX_KEYPOINTS as u8)
                .map(|i| (i, hue_color(f64::from(i - 1) * 36.0)))
                .collect(),
            node_radius: 4.0,
        }
    }
}

/// Fully saturated RGB color for a hue in degrees.
fn hue_color(hue: f64) -> Color {
    let h = (hue % 360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (v * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

impl PlotStyle {
    pub fn validate(&self) -> Result<(), RasterError> {
        if self.bbox_thickness < 1 {
            return Err(RasterError::Style("bbox_thickness must be at least 1".into()));
        }
        if !(self.node_radius >= 1.0) {
            return Err(RasterError::Style("node_radius must be at least 1".into()));
        }
        let mut seen: Vec<Color> = Vec::with_capacity(MAX_KEYPOINTS);
        for i in 1..=MAX_KEYPOINTS as u8 {
            let c = self
                .node_color_by_index
                .get(&i)
                .ok_or_else(|| RasterError::Style(format!("no color for node {i}")))?;
            if seen.contains(c) {
                return Err(RasterError::Style(format!("node {i} reuses color {c:?}")));
            }
            seen.push(*c);
        }
        Ok(())
    }

    pub fn node_color(&self, index: u8) -> Color {
        self.node_color_by_index.get(&index).copied().unwrap_or(self.bbox_color)
    }
}

/// Draws annotations on a fresh `w` x `h` RGB canvas of the style's background.
pub fn render_annotation_plot(
    anns: &[ShootAnnotation],
    w: u32,
    h: u32,
    style: &PlotStyle,
) -> Result<RasterImage, RasterError> {
    let mut canvas = RasterImage::filled_rgb(w, h, style.background);
    draw_annotations(&mut canvas, anns, style)?;
    Ok(canvas)
}

/// Draws annotations over an existing image (used for review overlays).
///
/// Boxes are snapped to the integer pixel grid and drawn inward with the
/// style's thickness. A pixel belongs to a node disc iff its Euclidean
/// distance to the node is at most the radius. No anti-aliasing.
pub fn draw_annotations(
    canvas: &mut RasterImage,
    anns: &[ShootAnnotation],
    style: &PlotStyle,
) -> Result<(), RasterError> {
    style.validate()?;
    let (w, h) = (canvas.width(), canvas.height());
    for (i, ann) in anns.iter().enumerate() {
        ann.bbox
            .check_within(w, h)
            .map_err(|msg| RasterError::OutOfBounds(format!("annotation {i}: {msg}")))?;
    }
    for ann in anns {
        draw_rect(canvas, ann, style);
        for kp in ann.keypoints.iter().filter(|k| k.visible) {
            draw_disc(canvas, kp.x, kp.y, style.node_radius, style.node_color(kp.index));
        }
    }
    Ok(())
}

fn draw_rect(canvas: &mut RasterImage, ann: &ShootAnnotation, style: &PlotStyle) {
    let b = ann.bbox;
    let clamp_x = |v: f64| v.round().clamp(0.0, f64::from(canvas.width())) as u32;
    let clamp_y = |v: f64| v.round().clamp(0.0, f64::from(canvas.height())) as u32;
    let (x0, x1) = (clamp_x(b.x), clamp_x(b.right()));
    let (y0, y1) = (clamp_y(b.y), clamp_y(b.bottom()));
    let t = style.bbox_thickness;
    for y in y0..y1 {
        let edge_row = y < y0 + t || y + t >= y1;
        for x in x0..x1 {
            if edge_row || x < x0 + t || x + t >= x1 {
                canvas.put(x, y, style.bbox_color);
            }
        }
    }
}

fn draw_disc(canvas: &mut RasterImage, cx: f64, cy: f64, radius: f64, color: Color) {
    let r2 = radius * radius;
    let lo_x = (cx - radius).ceil().max(0.0);
    let hi_x = (cx + radius).floor().min(f64::from(canvas.width()) - 1.0);
    let lo_y = (cy - radius).ceil().max(0.0);
    let hi_y = (cy + radius).floor().min(f64::from(canvas.height()) - 1.0);
    if lo_x > hi_x || lo_y > hi_y {
        return;
    }
    for y in lo_y as u32..=hi_y as u32 {
        let dy = f64::from(y) - cy;
        for x in lo_x as u32..=hi_x as u32 {
            let dx = f64::from(x) - cx;
            if dx * dx + dy * dy <= r2 {
                canvas.put(x, y, color);
            }
        }
    }
}
