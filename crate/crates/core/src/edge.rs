//! Canny edge extraction for Stage-1 conditioning images.
//!
//! The pipeline is Gaussian blur, 3x3 Sobel gradients, non-maximum
//! suppression over four quantized directions and hysteresis. Every stage is
//! mirror-symmetric, so `canny(hflip(img)) == hflip(canny(img))` holds pixel
//! for pixel. Gradient magnitudes are divided by 4, which maps a full 0 to 255
//! step onto 255.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::raster::RasterImage;

#[derive(Debug, thiserror::Error)]
pub enum EdgeError {
    #[error("invalid preset `{name}`: {reason}")]
    Preset { name: String, reason: String },
    #[error("gaussian sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("failed to read presets: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed presets JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannyPreset {
    pub name: String,
    pub gaussian_sigma: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl CannyPreset {
    pub fn new(name: impl Into<String>, gaussian_sigma: f64, low_threshold: f64, high_threshold: f64) -> Self {
        Self {
            name: name.into(),
            gaussian_sigma,
            low_threshold,
            high_threshold,
        }
    }

    pub fn validate(&self) -> Result<(), EdgeError> {
        let fail = |reason: &str| {
            Err(EdgeError::Preset {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return fail("sigma must be positive");
        }
        if !(self.low_threshold > 0.0 && self.low_threshold < self.high_threshold && self.high_threshold.is_finite()) {
            return fail("thresholds must satisfy 0 < low < high");
        }
        Ok(())
    }
}

/// The four shipped presets, densest edges first.
pub fn default_presets() -> Vec<CannyPreset> {
    vec![
        CannyPreset::new("dense", 1.4, 20.0, 60.0),
        CannyPreset::new("medium", 1.4, 40.0, 100.0),
        CannyPreset::new("sparse", 1.4, 60.0, 140.0),
        CannyPreset::new("minimal", 1.4, 80.0, 180.0),
    ]
}

/// Reads a JSON array of presets and validates each.
pub fn load_presets(path: impl AsRef<Path>) -> Result<Vec<CannyPreset>, EdgeError> {
    let presets: Vec<CannyPreset> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for p in &presets {
        p.validate()?;
    }
    Ok(presets)
}

/// Looks a preset up by name, or by zero-based index when `key` is numeric.
pub fn find_preset<'a>(presets: &'a [CannyPreset], key: &str) -> Result<&'a CannyPreset, EdgeError> {
    if let Some(p) = presets.iter().find(|p| p.name == key) {
        return Ok(p);
    }
    key.parse::<usize>()
        .ok()
        .and_then(|i| presets.get(i))
        .ok_or_else(|| EdgeError::UnknownPreset(key.to_string()))
}

/// reflect-101 border: `-1 -> 1`, `n -> n - 2`.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i > last {
            i = 2 * last - i;
        } else {
            return i as usize;
        }
    }
}

/// Normalized half kernel: `k[0]` is the center weight, `k[i]` the weight at
/// offset `±i`. Truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Separable Gaussian blur of the luma channel, rounded back to 8 bits.
pub fn gaussian_blur(img: &RasterImage, sigma: f64) -> Result<RasterImage, EdgeError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(EdgeError::Sigma(sigma));
    }
    let gray = img.to_gray();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let k = gaussian_kernel(sigma);
    let src = gray.pixels();

    // Symmetric taps are summed pairwise so a mirrored input yields the
    // mirrored output exactly.
    let mut horiz = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = k[0] * f64::from(row[x]);
            for (i, wk) in k.iter().enumerate().skip(1) {
                let l = row[reflect(x as isize - i as isize, w)];
                let r = row[reflect(x as isize + i as isize, w)];
                acc += wk * (f64::from(l) + f64::from(r));
            }
            horiz[y * w + x] = acc;
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = k[0] * horiz[y * w + x];
            for (i, wk) in k.iter().enumerate().skip(1) {
                let u = horiz[reflect(y as isize - i as isize, h) * w + x];
                let d = horiz[reflect(y as isize + i as isize, h) * w + x];
                acc += wk * (u + d);
            }
            out[y * w + x] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(RasterImage::new(gray.width(), gray.height(), 1, out).expect("dimensions preserved"))
}

/// Intermediate results of one Canny run.
#[derive(Debug, Clone)]
pub struct CannyStages {
    pub width: usize,
    pub height: usize,
    /// Scaled Sobel magnitude per pixel.
    pub magnitude: Vec<f64>,
    /// Pixels surviving non-maximum suppression.
    pub ridge: Vec<bool>,
    /// Ridge pixels at or above the high threshold (hysteresis seeds).
    pub strong: Vec<bool>,
    /// Final edge map, 0 or 255.
    pub edges: RasterImage,
}

impl CannyStages {
    pub fn edge_count(&self) -> usize {
        self.edges.pixels().iter().filter(|&&v| v != 0).count()
    }
}

const TAN_22_5: f64 = 0.414_213_562_373_095_03;

/// Integer Sobel responses with reflect-101 borders.
pub fn sobel(img: &RasterImage) -> (Vec<i32>, Vec<i32>) {
    let gray = img.to_gray();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let p = gray.pixels();
    let at = |x: isize, y: isize| i32::from(p[reflect(y, h) * w + reflect(x, w)]);
    let mut gx = vec![0; w * h];
    let mut gy = vec![0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let col = |cx: isize| 2 * at(cx, y) + at(cx, y - 1) + at(cx, y + 1);
            let row = |ry: isize| 2 * at(x, ry) + at(x - 1, ry) + at(x + 1, ry);
            let i = y as usize * w + x as usize;
            gx[i] = col(x + 1) - col(x - 1);
            gy[i] = row(y + 1) - row(y - 1);
        }
    }
    (gx, gy)
}

/// Runs the full pipeline and keeps every intermediate stage.
pub fn canny_stages(img: &RasterImage, preset: &CannyPreset) -> Result<CannyStages, EdgeError> {
    preset.validate()?;
    let blurred = gaussian_blur(img, preset.gaussian_sigma)?;
    let (w, h) = (blurred.width() as usize, blurred.height() as usize);
    let (gx, gy) = sobel(&blurred);
    let magnitude: Vec<f64> = gx
        .iter()
        .zip(&gy)
        .map(|(&a, &b)| (f64::from(a * a + b * b)).sqrt() / 4.0)
        .collect();

    let mag_at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            magnitude[y as usize * w + x as usize]
        }
    };
    let mut ridge = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let (ax, ay) = (f64::from(gx[i].abs()), f64::from(gy[i].abs()));
            let (sx, sy) = (gx[i].signum() as isize, gy[i].signum() as isize);
            // offset towards increasing intensity
            let (ux, uy) = if ay <= ax * TAN_22_5 {
                (sx, 0)
            } else if ax <= ay * TAN_22_5 {
                (0, sy)
            } else {
                (sx, sy)
            };
            let (xi, yi) = (x as isize, y as isize);
            // ties are resolved toward the darker side, which keeps a single
            // pixel on plateau ridges while staying mirror-symmetric
            ridge[i] = m >= mag_at(xi + ux, yi + uy) && m > mag_at(xi - ux, yi - uy);
        }
    }

    let strong: Vec<bool> = (0..w * h)
        .map(|i| ridge[i] && magnitude[i] >= preset.high_threshold)
        .collect();
    let weak: Vec<bool> = (0..w * h)
        .map(|i| ridge[i] && magnitude[i] >= preset.low_threshold)
        .collect();
    let mut keep = vec![false; w * h];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &s) in strong.iter().enumerate() {
        if s {
            keep[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if weak[j] && !keep[j] {
                    keep[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    let pixels = keep.iter().map(|&k| if k { 255 } else { 0 }).collect();
    let edges = RasterImage::new(w as u32, h as u32, 1, pixels).expect("dimensions preserved");
    Ok(CannyStages {
        width: w,
        height: h,
        magnitude,
        ridge,
        strong,
        edges,
    })
}

/// Binary edge map (values 0 or 255) of a gray or color image.
pub fn canny(img: &RasterImage, preset: &CannyPreset) -> Result<RasterImage, EdgeError> {
    canny_stages(img, preset).map(|s| s.edges)
}
