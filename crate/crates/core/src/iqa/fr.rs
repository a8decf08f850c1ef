use serde::{Deserialize, Serialize};

use super::{embed_distance, EmbeddingProvider, IqaError, MetricReport};
use crate::dataset::ShootAnnotation;
use crate::raster::RasterImage;

const PEAK: f64 = 255.0;

fn check_shape(a: &RasterImage, b: &RasterImage) -> Result<(), IqaError> {
    if !a.same_shape(b) {
        return Err(IqaError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all channels; `+inf` for identical images.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64, IqaError> {
    check_shape(a, b)?;
    let n = a.pixels().len();
    if n == 0 {
        return Err(IqaError::Shape("empty images".into()));
    }
    let sse: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / n as f64;
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

/// SSIM window parameters. Defaults: 11 px Gaussian window, sigma 1.5,
/// `K1 = 0.01`, `K2 = 0.03`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

fn window_weights(p: &SsimParams) -> Vec<f64> {
    let c = (p.window as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..p.window)
        .map(|i| {
            let d = i as f64 - c;
            (-(d * d) / (2.0 * p.sigma * p.sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Valid-mode separable filtering of a `w` x `h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over every full window position of the luma
/// planes. `ssim(a, a)` is exactly 1 and the function is exactly symmetric.
pub fn ssim(a: &RasterImage, b: &RasterImage, params: &SsimParams) -> Result<f64, IqaError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(IqaError::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    if params.window == 0 || w < params.window || h < params.window {
        return Err(IqaError::TooSmall {
            width: a.width(),
            height: a.height(),
            window: params.window,
        });
    }
    let pa: Vec<f64> = a.to_gray().pixels().iter().map(|&v| f64::from(v)).collect();
    let pb: Vec<f64> = b.to_gray().pixels().iter().map(|&v| f64::from(v)).collect();
    let k = window_weights(params);
    let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
    let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(&pa, w, h, &k);
    let mu_b = filter_valid(&pb, w, h, &k);
    let e_aa = filter_valid(&sq(&pa), w, h, &k);
    let e_bb = filter_valid(&sq(&pb), w, h, &k);
    let e_ab = filter_valid(&prod, w, h, &k);
    let c1 = (params.k1 * PEAK).powi(2);
    let c2 = (params.k2 * PEAK).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
        let den = ((ma * ma + mb * mb) + c1) * ((va + vb) + c2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

/// Anisotropic total variation with forward differences, divided by pixel count.
pub fn total_variation(img: &RasterImage) -> f64 {
    let g = img.to_gray();
    let (w, h) = (g.width() as usize, g.height() as usize);
    if w == 0 || h == 0 {
        return 0.0;
    }
    let p = g.pixels();
    let mut sum = 0u64;
    for y in 0..h {
        for x in 0..w {
            let v = i32::from(p[y * w + x]);
            if x + 1 < w {
                sum += (i32::from(p[y * w + x + 1]) - v).unsigned_abs() as u64;
            }
            if y + 1 < h {
                sum += (i32::from(p[(y + 1) * w + x]) - v).unsigned_abs() as u64;
            }
        }
    }
    sum as f64 / (w * h) as f64
}

/// A full-reference metric usable on whole images and on box crops.
#[derive(Clone, Copy)]
pub enum FrMetric<'a> {
    Psnr,
    Ssim(SsimParams),
    /// Cosine distance between provider embeddings.
    Embedding(&'a dyn EmbeddingProvider),
}

impl std::fmt::Debug for FrMetric<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl FrMetric<'_> {
    pub fn name(&self) -> String {
        match self {
            FrMetric::Psnr => "psnr".into(),
            FrMetric::Ssim(_) => "ssim".into(),
            FrMetric::Embedding(p) => format!("embed:{}", p.name()),
        }
    }

    pub fn evaluate(&self, reference: &RasterImage, generated: &RasterImage) -> Result<f64, IqaError> {
        match self {
            FrMetric::Psnr => psnr(reference, generated),
            FrMetric::Ssim(p) => ssim(reference, generated, p),
            FrMetric::Embedding(p) => embed_distance(reference, generated, *p),
        }
    }
}

/// Scores each annotated box region of `generated` against the same region of
/// `reference`; the report value is the arithmetic mean over boxes. Box
/// edges are expanded outwards to whole pixels.
pub fn cropped_fr_score(
    reference: &RasterImage,
    generated: &RasterImage,
    anns: &[ShootAnnotation],
    metric: FrMetric<'_>,
) -> Result<MetricReport, IqaError> {
    check_shape(reference, generated)?;
    if anns.is_empty() {
        return Err(IqaError::NoBoxes);
    }
    let mut values = Vec::with_capacity(anns.len());
    for (index, ann) in anns.iter().enumerate() {
        ann.bbox
            .check_within(reference.width(), reference.height())
            .map_err(|message| IqaError::BoxOutside { index, message })?;
        let b = ann.bbox;
        let x0 = b.x.floor() as u32;
        let y0 = b.y.floor() as u32;
        let x1 = (b.right().ceil() as u32).min(reference.width());
        let y1 = (b.bottom().ceil() as u32).min(reference.height());
        let r = reference.crop(x0, y0, x1 - x0, y1 - y0)?;
        let g = generated.crop(x0, y0, x1 - x0, y1 - y0)?;
        values.push(metric.evaluate(&r, &g)?);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut report = MetricReport::new(format!("cropped_{}", metric.name()), mean);
    report.sample_sizes = vec![values.len()];
    report.params.insert(
        "per_box".into(),
        serde_json::Value::from(
            values
                .iter()
                .map(|v| {
                    if v.is_finite() {
                        serde_json::Value::from(*v)
                    } else {
                        serde_json::Value::Null
                    }
                })
                .collect::<Vec<_>>(),
        ),
    );
    Ok(report)
}
