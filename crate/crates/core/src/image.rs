//! 8-bit single-channel rasters and three-plane fused images.

use std::path::Path;

use image::{DynamicImage, GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::fusion::FusionMode;

/// Single-channel intensity raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Input(format!(
                "{width}x{height} plane needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(ImagePlane { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        ImagePlane {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        ImagePlane { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.values[y * self.width + x] = v;
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Loads a PNG. Colour images are reduced to luma with ITU-R 601 weights.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(img))
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                ImagePlane {
                    width: w as usize,
                    height: h as usize,
                    values: g.into_raw(),
                }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                let values = rgb.pixels().map(|p| luma601(p.0)).collect();
                ImagePlane {
                    width: w as usize,
                    height: h as usize,
                    values,
                }
            }
        }
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.values.clone())
            .expect("plane length matches its dimensions")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        self.to_gray_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// ITU-R BT.601 luma of an RGB triple.
pub fn luma601(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(f64::from);
    (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Three planes in B, G, R order plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedImage {
    pub planes: [ImagePlane; 3],
    pub mode: FusionMode,
    pub source_frame_index: usize,
}

impl FusedImage {
    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn blue(&self) -> &ImagePlane {
        &self.planes[0]
    }

    pub fn green(&self) -> &ImagePlane {
        &self.planes[1]
    }

    pub fn red(&self) -> &ImagePlane {
        &self.planes[2]
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        let (w, h) = (self.width(), self.height());
        let mut img = RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = Rgb([self.red().get(x, y), self.green().get(x, y), self.blue().get(x, y)]);
                img.put_pixel(x as u32, y as u32, px);
            }
        }
        img
    }

    /// Lossless RGB preview (R plane in red, and so on).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        self.to_rgb_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Writes a grayscale image from real values, min-max stretched to `[0, 255]`.
/// A constant input yields an all-black image.
pub fn normalized_gray(width: usize, height: usize, values: &[f64]) -> GrayImage {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let mut img = GrayImage::new(width as u32, height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let v = if range > 0.0 { (values[i] - lo) / range * 255.0 } else { 0.0 };
        *px = Luma([v.round().clamp(0.0, 255.0) as u8]);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ImagePlane::from_fn(7, 5, |x, y| (x * 30 + y) as u8);
        let path = dir.path().join("a.png");
        p.save_png(&path).unwrap();
        assert_eq!(ImagePlane::load_png(&path).unwrap(), p);
    }

    #[test]
    fn colour_input_becomes_601_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        RgbImage::from_pixel(2, 2, Rgb([200, 100, 50])).save(&path).unwrap();
        let p = ImagePlane::load_png(&path).unwrap();
        // 0.299*200 + 0.587*100 + 0.114*50 = 124.2
        assert!(p.values().iter().all(|&v| v == 124));
    }

    #[test]
    fn unreadable_file_reports_path() {
        let err = ImagePlane::load_png(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }

    #[test]
    fn constant_values_give_black() {
        let img = normalized_gray(3, 2, &[0.0; 6]);
        assert!(img.pixels().all(|p| p.0[0] == 0));
        let img = normalized_gray(2, 1, &[1.0, 3.0]);
        assert_eq!(img.into_raw(), vec![0, 255]);
    }
}
