use std::path::Path;

use super::RasterError;

/// 8-bit image buffer, row-major, interleaved channels (1 = gray, 3 = RGB).
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Image filled with a single gray value.
    pub fn filled_gray(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            channels: 1,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn filled_rgb(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            channels: 3,
            pixels,
        }
    }

    /// Builds a gray image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn_gray(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Channel values of one pixel.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.pixels[o..o + self.channels as usize]
    }

    pub fn gray_at(&self, x: u32, y: u32) -> u8 {
        match self.channels {
            1 => self.pixels[self.offset(x, y)],
            _ => luma(self.pixel(x, y)),
        }
    }

    /// Writes `color` to a pixel; gray images receive the color's luma.
    pub fn put(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let o = self.offset(x, y);
        if self.channels == 1 {
            self.pixels[o] = luma(&color);
        } else {
            self.pixels[o..o + 3].copy_from_slice(&color);
        }
    }

    /// Luma conversion (0.299, 0.587, 0.114); gray images are returned as is.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self.pixels.chunks_exact(3).map(luma).collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
        }
    }

    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
        }
    }

    /// Returns the `w` x `h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RasterImage, RasterError> {
        if w == 0
            || h == 0
            || x.checked_add(w).is_none_or(|r| r > self.width)
            || y.checked_add(h).is_none_or(|b| b > self.height)
        {
            return Err(RasterError::OutOfBounds(format!(
                "crop {w}x{h} at ({x}, {y}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let c = self.channels as usize;
        let mut pixels = Vec::with_capacity(w as usize * h as usize * c);
        for row in y..y + h {
            let start = self.offset(x, row);
            pixels.extend_from_slice(&self.pixels[start..start + w as usize * c]);
        }
        Ok(RasterImage {
            width: w,
            height: h,
            channels: self.channels,
            pixels,
        })
    }

    /// Reverses pixel columns.
    pub fn flipped_horizontally(&self) -> RasterImage {
        let c = self.channels as usize;
        let row_len = self.width as usize * c;
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks_exact(row_len.max(1)) {
            for px in row.chunks_exact(c).rev() {
                pixels.extend_from_slice(px);
            }
        }
        RasterImage {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels,
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = std::io::Cursor::new(Vec::new());
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::write_buffer_with_format(
            &mut out,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(out.into_inner())
    }

    /// Decodes any 8/16-bit PNG; alpha is dropped, 16-bit samples are reduced to 8 bits.
    pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, RasterError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(from_dynamic(img))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<RasterImage, RasterError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode_png(&bytes)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Resamples to `width` x `height` with a triangle filter.
    pub fn resized(&self, width: u32, height: u32) -> RasterImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let dynamic = if self.channels == 1 {
            image::DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer size checked"),
            )
        } else {
            image::DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer size checked"),
            )
        };
        from_dynamic(dynamic.resize_exact(width, height, image::imageops::FilterType::Triangle))
    }
}

fn from_dynamic(img: image::DynamicImage) -> RasterImage {
    let (width, height) = (img.width(), img.height());
    if img.color().has_color() {
        RasterImage {
            width,
            height,
            channels: 3,
            pixels: img.into_rgb8().into_raw(),
        }
    } else {
        RasterImage {
            width,
            height,
            channels: 1,
            pixels: img.into_luma8().into_raw(),
        }
    }
}

/// ITU-R BT.601 luma, rounded.
pub fn luma(rgb: &[u8]) -> u8 {
    let v = 0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2]);
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_length_checked() {
        assert!(RasterImage::new(2, 2, 1, vec![0; 4]).is_ok());
        assert!(matches!(
            RasterImage::new(2, 2, 3, vec![0; 4]),
            Err(RasterError::BufferSize {
                expected: 12,
                actual: 4
            })
        ));
        assert!(matches!(
            RasterImage::new(1, 1, 2, vec![0; 2]),
            Err(RasterError::Channels(2))
        ));
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma(&[255, 255, 255]), 255);
        assert_eq!(luma(&[255, 0, 0]), 76);
        assert_eq!(luma(&[0, 255, 0]), 150);
        assert_eq!(luma(&[0, 0, 255]), 29);
    }

    #[test]
    fn png_round_trip() {
        let img = RasterImage::from_fn_gray(7, 5, |x, y| (x * 30 + y) as u8);
        let back = RasterImage::decode_png(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
        let rgb = img.to_rgb();
        let back = RasterImage::decode_png(&rgb.encode_png().unwrap()).unwrap();
        assert_eq!(back, rgb);
    }

    #[test]
    fn crop_and_flip() {
        let img = RasterImage::from_fn_gray(4, 3, |x, y| (y * 4 + x) as u8);
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.pixels(), &[5, 6, 9, 10]);
        assert!(img.crop(3, 0, 2, 1).is_err());
        let f = img.flipped_horizontally();
        assert_eq!(f.pixel(0, 0), &[3]);
        assert_eq!(f.flipped_horizontally(), img);
    }
}
