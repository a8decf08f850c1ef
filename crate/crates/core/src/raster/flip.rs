use super::{RasterError, RasterImage};
use crate::dataset::{BBox, Keypoint, ShootAnnotation};

/// Mirrors an image (optional) and its annotations about the vertical axis.
///
/// Boxes map to `x' = W - x - w`, node pixel coordinates to `x' = W - 1 - x`.
/// Node indices and vertical positions are untouched. The mapping is exact
/// for coordinates on the integer pixel grid, so applying it twice gives
/// back the input bit for bit.
pub fn hflip(
    img: Option<&RasterImage>,
    anns: &[ShootAnnotation],
    canvas_w: u32,
) -> Result<(Option<RasterImage>, Vec<ShootAnnotation>), RasterError> {
    if let Some(img) = img {
        if img.width() != canvas_w {
            return Err(RasterError::OutOfBounds(format!(
                "image width {} does not match canvas width {canvas_w}",
                img.width()
            )));
        }
    }
    let w = f64::from(canvas_w);
    for (i, a) in anns.iter().enumerate() {
        if a.bbox.x < 0.0 || a.bbox.right() > w {
            return Err(RasterError::OutOfBounds(format!(
                "annotation {i}: bbox spans x {}..{} outside canvas width {canvas_w}",
                a.bbox.x,
                a.bbox.right()
            )));
        }
    }
    let flipped = anns
        .iter()
        .map(|a| ShootAnnotation {
            bbox: BBox {
                x: w - a.bbox.x - a.bbox.w,
                ..a.bbox
            },
            keypoints: a
                .keypoints
                .iter()
                .map(|k| Keypoint { x: w - 1.0 - k.x, ..*k })
                .collect(),
        })
        .collect();
    Ok((img.map(RasterImage::flipped_horizontally), flipped))
}
